#include "radood/sim.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "radood/errors.hpp"

namespace radood {

std::string to_string(DisturbanceKind kind) {
  switch (kind) {
    case DisturbanceKind::cGN: return "cGN";
    case DisturbanceKind::cCGN: return "cCGN";
    case DisturbanceKind::AWGN: return "AWGN";
    case DisturbanceKind::cGN_AWGN: return "cGN+AWGN";
    case DisturbanceKind::cCGN_AWGN: return "cCGN+AWGN";
  }
  return "?";
}

DisturbanceKind parse_disturbance_kind(const std::string& s) {
  for (auto k : {DisturbanceKind::cGN, DisturbanceKind::cCGN, DisturbanceKind::AWGN,
                 DisturbanceKind::cGN_AWGN, DisturbanceKind::cCGN_AWGN}) {
    if (to_string(k) == s) return k;
  }
  throw InvalidArgument("unknown disturbance kind '" + s + "'");
}

void DisturbanceSpec::validate() const {
  if (m <= 0) throw InvalidArgument("DisturbanceSpec: m must be positive");
  if (!(rho >= 0.0 && rho < 1.0)) throw InvalidArgument("DisturbanceSpec: rho must lie in [0, 1)");
  if (!(mu_texture > 0.0)) throw InvalidArgument("DisturbanceSpec: mu_texture must be positive");
  if (!(sigma_n2 >= 0.0)) throw InvalidArgument("DisturbanceSpec: sigma_n2 must be nonnegative");
  if ((kind == DisturbanceKind::cGN_AWGN || kind == DisturbanceKind::cCGN_AWGN) && !(sigma_n2 > 0.0)) {
    throw InvalidArgument("DisturbanceSpec: mixture " + to_string(kind) + " needs sigma_n2 > 0");
  }
}

HermitianMatrix DisturbanceSpec::covariance() const {
  validate();
  ComplexMatrix sigma = ComplexMatrix::Zero(m, m);
  if (has_clutter()) sigma += toeplitz(rho, m).matrix();
  if (has_noise()) sigma.diagonal().array() += sigma_n2;
  return HermitianMatrix(sigma);
}

ComplexVector steering(int d, int m) {
  if (m <= 0) throw InvalidArgument("steering: m must be positive");
  if (d < 0 || d >= m) {
    throw InvalidArgument("steering: bin " + std::to_string(d) + " outside [0, " + std::to_string(m) + ")");
  }
  ComplexVector p(m);
  for (int k = 0; k < m; ++k) {
    // Reduce d*k mod m first so the angle stays exact for large products.
    const double angle = 2.0 * std::numbers::pi * static_cast<double>((d * k) % m) / m;
    p[k] = Complex(std::cos(angle), std::sin(angle));
  }
  return p;
}

Complex target_amplitude(double snr, int m, double phase) {
  if (!(snr >= 0.0)) throw InvalidArgument("target_amplitude: snr must be nonnegative");
  return std::polar(std::sqrt(snr / m), 2.0 * std::numbers::pi * phase);
}

DisturbanceGenerator::DisturbanceGenerator(const DisturbanceSpec& spec)
    : spec_(spec), covariance_(spec.covariance()), innovation_scale_(std::sqrt(1.0 - spec.rho * spec.rho)) {}

double DisturbanceGenerator::draw_texture(Rng& rng) const {
  if (!spec_.is_compound()) return 1.0;
  std::gamma_distribution<double> gamma(spec_.mu_texture, 1.0 / spec_.mu_texture);
  return gamma(rng);
}

void DisturbanceGenerator::draw_speckle(Rng& rng, std::optional<Complex> prev, std::span<Complex> out) const {
  ComplexNormal cn;
  const double rho = spec_.rho;
  for (std::size_t k = 0; k < out.size(); ++k) {
    const Complex w = cn(rng);
    if (k == 0 && !prev) {
      out[0] = w;
    } else {
      const Complex last = (k == 0) ? *prev : out[k - 1];
      out[k] = rho * last + innovation_scale_ * w;
    }
  }
}

ComplexVector DisturbanceGenerator::draw_with_texture(Rng& rng, double tau) const {
  const int m = spec_.m;
  ComplexVector z = ComplexVector::Zero(m);
  if (spec_.has_clutter()) {
    draw_speckle(rng, std::nullopt, std::span<Complex>(z.data(), static_cast<std::size_t>(m)));
    if (spec_.is_compound()) z *= std::sqrt(tau);
  }
  if (spec_.has_noise()) {
    ComplexNormal cn;
    const double s = std::sqrt(spec_.sigma_n2);
    for (int k = 0; k < m; ++k) z[k] += s * cn(rng);
  }
  return z;
}

ComplexVector DisturbanceGenerator::draw(Rng& rng, double* tau_out) const {
  const double tau = draw_texture(rng);
  if (tau_out) *tau_out = tau;
  return draw_with_texture(rng, tau);
}

ComplexVector DisturbanceGenerator::draw(Rng& rng) const { return draw(rng, nullptr); }

ComplexMatrix DisturbanceGenerator::draw_many(Rng& rng, int k) const {
  ComplexMatrix z(spec_.m, k);
  for (int j = 0; j < k; ++j) z.col(j) = draw(rng);
  return z;
}

ComplexVector draw_disturbance(const DisturbanceSpec& spec, Rng& rng) {
  return DisturbanceGenerator(spec).draw(rng);
}

ComplexVector inject_target(const ComplexVector& dist, const TargetSpec& target, Rng& rng) {
  const int m = static_cast<int>(dist.size());
  double phase = 0.0;
  if (target.phase) {
    phase = *target.phase;
  } else {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    phase = u(rng);
  }
  if (target.snr == 0.0) return dist;
  return dist + target_amplitude(target.snr, m, phase) * steering(target.d, m);
}

void RangePulseCube::validate() const {
  if (n_ranges <= 0 || n_pulses <= 0) throw InvalidArgument("RangePulseCube: dimensions must be positive");
  if (data.rows() != n_ranges || data.cols() != n_pulses) {
    throw InvalidArgument("RangePulseCube: data shape does not match header");
  }
  if (!data.allFinite()) throw InvalidArgument("RangePulseCube: non-finite entries");
}

RangePulseCube simulate_cube(const DisturbanceSpec& spec, int n_ranges, int n_pulses,
                             std::span<const TargetPlacement> targets, std::uint64_t seed) {
  spec.validate();
  const int m = spec.m;
  if (n_ranges <= 0 || n_pulses <= 0) throw InvalidArgument("simulate_cube: dimensions must be positive");

  for (std::size_t i = 0; i < targets.size(); ++i) {
    const auto& t = targets[i];
    if (t.range < 0 || t.range >= n_ranges || t.pulse_offset < 0 || t.pulse_offset + m > n_pulses) {
      throw InvalidArgument("simulate_cube: target " + std::to_string(i) + " does not fit inside the cube");
    }
    if (t.target.d < 0 || t.target.d >= m) throw InvalidArgument("simulate_cube: target bin out of range");
    for (std::size_t j = 0; j < i; ++j) {
      const auto& o = targets[j];
      if (o.range == t.range && std::abs(o.pulse_offset - t.pulse_offset) < m) {
        throw InvalidArgument("simulate_cube: targets " + std::to_string(j) + " and " + std::to_string(i) +
                              " overlap at gate " + std::to_string(t.range));
      }
    }
  }

  const DisturbanceGenerator gen(spec);
  RangePulseCube cube{n_ranges, n_pulses, ComplexMatrix::Zero(n_ranges, n_pulses)};
  const int n_windows = (n_pulses + m - 1) / m;
  std::vector<Complex> window(static_cast<std::size_t>(m));
  ComplexNormal cn;
  const double noise_scale = std::sqrt(spec.sigma_n2);

  for (int r = 0; r < n_ranges; ++r) {
    std::optional<Complex> prev;
    for (int w = 0; w < n_windows; ++w) {
      Rng rng = substream(seed, {tag(StreamTag::Cube), static_cast<std::uint64_t>(r), static_cast<std::uint64_t>(w)});
      const int p0 = w * m;
      const int len = std::min(m, n_pulses - p0);
      const double tau = gen.draw_texture(rng);
      if (spec.has_clutter()) {
        gen.draw_speckle(rng, prev, std::span<Complex>(window.data(), static_cast<std::size_t>(len)));
        prev = window[static_cast<std::size_t>(len - 1)];
        const double amp = spec.is_compound() ? std::sqrt(tau) : 1.0;
        for (int k = 0; k < len; ++k) cube.data(r, p0 + k) = amp * window[static_cast<std::size_t>(k)];
      }
      if (spec.has_noise()) {
        for (int k = 0; k < len; ++k) cube.data(r, p0 + k) += noise_scale * cn(rng);
      }
    }
  }

  for (std::size_t i = 0; i < targets.size(); ++i) {
    const auto& t = targets[i];
    Rng rng = substream(seed, {tag(StreamTag::CubeTarget), static_cast<std::uint64_t>(i)});
    const ComplexVector window_data = cube.data.row(t.range).segment(t.pulse_offset, m).transpose();
    const ComplexVector with_target = inject_target(window_data, t.target, rng);
    cube.data.row(t.range).segment(t.pulse_offset, m) = with_target.transpose();
  }
  return cube;
}

}  // namespace radood
