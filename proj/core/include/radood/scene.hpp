#pragma once

// Monte Carlo trial generation and per-trial statistics.
//
// A trial is one draw of K secondary snapshots, one primary disturbance
// snapshot c and one target phase. The same trial is reused across every
// (SNR, Doppler bin) grid point (common random numbers), and the covariance
// estimates are computed once per trial.

#include <cstdint>
#include <optional>

#include "radood/covest.hpp"
#include "radood/detectors.hpp"
#include "radood/experiment.hpp"
#include "radood/linalg.hpp"
#include "radood/rng.hpp"
#include "radood/sim.hpp"

namespace radood {

struct Trial {
  ComplexMatrix secondary;  // m x K, empty when not requested
  ComplexVector c;          // primary disturbance
  double phase = 0.0;       // target phase in [0, 1)
};

// True when Train, Eval, Test and Holdout map to distinct stream tags, so
// their trials never share a substream.
bool splits_disjoint();

class Scene {
 public:
  struct Needs {
    bool scm = false;
    bool tyler = false;
    bool local = false;
    bool any() const { return scm || tyler || local; }
  };

  struct Estimates {
    std::optional<SteeringBank> scm;
    std::optional<SteeringBank> tyler;
    std::optional<HermitianMatrix> local_inv_sqrt;
  };

  Scene(const DisturbanceSpec& spec, int k_secondary, const TylerOptions& tyler, double eps_ridge);

  int m() const noexcept { return generator_.spec().m; }
  int k_secondary() const noexcept { return k_; }
  const DisturbanceGenerator& generator() const noexcept { return generator_; }
  const SteeringBank& oracle_bank() const noexcept { return oracle_bank_; }
  const HermitianMatrix& oracle_inv_sqrt() const noexcept { return oracle_inv_sqrt_; }
  const std::vector<ComplexVector>& steering_vectors() const noexcept { return steer_; }

  // Trial `index` of `split` under master seed `seed`.
  Trial draw(std::uint64_t seed, StreamTag split, std::uint64_t index, bool with_secondary) const;
  Estimates estimate(const Trial& t, Needs needs) const;
  // Same, from an arbitrary m x K block of secondary data.
  Estimates estimate(const ComplexMatrix& secondary, Needs needs) const;

  // c + alpha p_d with alpha = sqrt(snr / m) exp(2 pi i phase).
  ComplexVector snapshot(const Trial& t, double snr_linear, int d) const;

  // Statistic of a classical detector for every bin, written to out[0..m).
  void classical(DetectorKind kind, const ComplexVector& z, const Estimates& est, double* out) const;
  // Doppler profile seen by the CVAE.
  ComplexVector profile(const ComplexVector& z, Preprocessing pre, const Estimates& est) const;

 private:
  DisturbanceGenerator generator_;
  int k_;
  TylerOptions tyler_;
  double eps_ridge_;
  SteeringBank oracle_bank_;
  HermitianMatrix oracle_inv_sqrt_;
  std::vector<ComplexVector> steer_;
};

// Which estimates a roster needs.
Scene::Needs needs_for(const std::vector<DetectorId>& roster);

}  // namespace radood
