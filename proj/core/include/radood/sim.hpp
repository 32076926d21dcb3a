#pragma once

// Disturbance environments (correlated Gaussian, compound-Gaussian with Gamma
// texture, white thermal noise and their mixtures) and target injection.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "radood/linalg.hpp"
#include "radood/rng.hpp"

namespace radood {

enum class DisturbanceKind { cGN, cCGN, AWGN, cGN_AWGN, cCGN_AWGN };

std::string to_string(DisturbanceKind kind);
DisturbanceKind parse_disturbance_kind(const std::string& s);

struct DisturbanceSpec {
  DisturbanceKind kind = DisturbanceKind::cGN;
  double rho = 0.5;         // Toeplitz correlation of the speckle
  double mu_texture = 1.0;  // Gamma shape; scale is 1/mu so E[tau] = 1
  double sigma_n2 = 0.0;    // thermal noise power
  int m = 16;

  bool has_clutter() const noexcept { return kind != DisturbanceKind::AWGN; }
  bool is_compound() const noexcept {
    return kind == DisturbanceKind::cCGN || kind == DisturbanceKind::cCGN_AWGN;
  }
  bool has_noise() const noexcept {
    return kind == DisturbanceKind::AWGN || kind == DisturbanceKind::cGN_AWGN ||
           kind == DisturbanceKind::cCGN_AWGN;
  }
  // Gaussian overall (no texture): the analytic MF threshold applies.
  bool is_gaussian() const noexcept { return !is_compound(); }

  void validate() const;
  // Total covariance E[tau] T(rho) + sigma_n2 I.
  HermitianMatrix covariance() const;
};

struct TargetSpec {
  int d = 0;                    // Doppler bin
  double snr = 0.0;             // linear, nominal injected SNR
  std::optional<double> phase;  // in [0, 1); nullopt draws a uniform phase
};

struct RangePulseCube {
  int n_ranges = 0;
  int n_pulses = 0;
  ComplexMatrix data;  // n_ranges x n_pulses

  void validate() const;
};

// p(d, m)_k = exp(2 pi i d k / m).
ComplexVector steering(int d, int m);

// alpha = sqrt(snr / m) exp(2 pi i phi).
Complex target_amplitude(double snr, int m, double phase);

// Draws snapshots for one disturbance spec. The speckle is generated as a
// stationary complex AR(1) sequence, whose covariance over any m-window is
// exactly T(rho). Cheap to copy; safe to share across threads.
class DisturbanceGenerator {
 public:
  explicit DisturbanceGenerator(const DisturbanceSpec& spec);

  const DisturbanceSpec& spec() const noexcept { return spec_; }
  const HermitianMatrix& covariance() const noexcept { return covariance_; }

  // One m-length snapshot; texture (if any) is drawn once for the snapshot.
  ComplexVector draw(Rng& rng) const;
  ComplexVector draw(Rng& rng, double* tau_out) const;
  // Same, with the texture supplied by the caller.
  ComplexVector draw_with_texture(Rng& rng, double tau) const;
  // m x k matrix of independent snapshots.
  ComplexMatrix draw_many(Rng& rng, int k) const;

  double draw_texture(Rng& rng) const;
  // Continues an AR(1) speckle sequence: out[0] follows `prev` (or is a
  // stationary start when prev is nullopt).
  void draw_speckle(Rng& rng, std::optional<Complex> prev, std::span<Complex> out) const;

 private:
  DisturbanceSpec spec_;
  HermitianMatrix covariance_;
  double innovation_scale_;
};

ComplexVector draw_disturbance(const DisturbanceSpec& spec, Rng& rng);

ComplexVector inject_target(const ComplexVector& dist, const TargetSpec& target, Rng& rng);

struct TargetPlacement {
  int range = 0;
  int pulse_offset = 0;
  TargetSpec target;
};

// Builds a range-pulse cube. Each gate carries a continuous AR(1) speckle
// sequence; the texture is redrawn per m-pulse window; targets add
// alpha * p over their m-pulse window.
RangePulseCube simulate_cube(const DisturbanceSpec& spec, int n_ranges, int n_pulses,
                             std::span<const TargetPlacement> targets, std::uint64_t seed);

}  // namespace radood
