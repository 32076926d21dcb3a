#include "radood/detectors.hpp"

#include <algorithm>
#include <cmath>

#include "radood/errors.hpp"
#include "radood/sim.hpp"

namespace radood {

std::string to_string(DetectorKind kind) {
  switch (kind) {
    case DetectorKind::MF: return "MF";
    case DetectorKind::NMF: return "NMF";
    case DetectorKind::AMF_SCM: return "AMF-SCM";
    case DetectorKind::ANMF_SCM: return "ANMF-SCM";
    case DetectorKind::ANMF_Tyler: return "ANMF-Tyler";
  }
  return "?";
}

DetectorKind parse_detector_kind(const std::string& s) {
  for (auto k : {DetectorKind::MF, DetectorKind::NMF, DetectorKind::AMF_SCM, DetectorKind::ANMF_SCM,
                 DetectorKind::ANMF_Tyler}) {
    if (to_string(k) == s) return k;
  }
  throw InvalidArgument("unknown detector kind '" + s + "'");
}

bool is_normalized(DetectorKind kind) {
  return kind == DetectorKind::NMF || kind == DetectorKind::ANMF_SCM || kind == DetectorKind::ANMF_Tyler;
}

namespace {

void check_dims(const ComplexVector& z, const ComplexVector& p, const HermitianMatrix& s) {
  if (z.size() != s.dim() || p.size() != s.dim()) throw InvalidArgument("detector: dimension mismatch");
}

double gain_or_throw(const ComplexVector& p, const HermitianMatrix& s) {
  const double g = std::real(p.dot(s.matrix() * p));
  if (!(g >= 1e-300)) throw SingularMatrix("detector: degenerate p^H S p");
  return g;
}

}  // namespace

double mf_stat(const ComplexVector& z, const ComplexVector& p, const HermitianMatrix& sigma_inv) {
  check_dims(z, p, sigma_inv);
  const double g = gain_or_throw(p, sigma_inv);
  return std::norm(p.dot(sigma_inv.matrix() * z)) / g;
}

double nmf_stat(const ComplexVector& z, const ComplexVector& p, const HermitianMatrix& sigma_inv) {
  check_dims(z, p, sigma_inv);
  if (z.squaredNorm() == 0.0) throw InvalidArgument("nmf_stat: zero snapshot");
  const double g = gain_or_throw(p, sigma_inv);
  const ComplexVector sz = sigma_inv.matrix() * z;
  const double zsz = std::real(z.dot(sz));
  if (!(zsz > 0.0)) throw SingularMatrix("nmf_stat: degenerate z^H S z");
  return std::clamp(std::norm(p.dot(sz)) / (g * zsz), 0.0, 1.0);
}

DetectorStatistic adaptive_stat(DetectorKind kind, const ComplexVector& z, const ComplexVector& p,
                                const CovarianceEstimate& est, int d) {
  const auto k = est.kind;
  const bool generic = k == CovarianceKind::Oracle || k == CovarianceKind::RidgeRegularized;
  bool ok = generic;
  switch (kind) {
    case DetectorKind::MF:
    case DetectorKind::NMF: ok = k == CovarianceKind::Oracle; break;
    case DetectorKind::AMF_SCM:
    case DetectorKind::ANMF_SCM: ok = ok || k == CovarianceKind::SCM; break;
    case DetectorKind::ANMF_Tyler: ok = ok || k == CovarianceKind::TylerFP; break;
  }
  if (!ok) {
    throw InvalidArgument("adaptive_stat: " + to_string(kind) + " cannot use a " + to_string(k) + " estimate");
  }
  const HermitianMatrix s = herm_inverse(est.matrix);
  const double v = is_normalized(kind) ? nmf_stat(z, p, s) : mf_stat(z, p, s);
  return {v, kind, d};
}

SteeringBank::SteeringBank(const HermitianMatrix& sigma_inv) : s_(sigma_inv.matrix()) {
  const int m = static_cast<int>(sigma_inv.dim());
  ComplexMatrix p(m, m);
  for (int d = 0; d < m; ++d) p.col(d) = steering(d, m);
  sp_ = s_ * p;
  gain_.resize(m);
  for (int d = 0; d < m; ++d) {
    gain_[d] = std::real(p.col(d).dot(sp_.col(d)));
    if (!(gain_[d] >= 1e-300)) throw SingularMatrix("SteeringBank: degenerate p^H S p");
  }
}

SteeringBank::Projection SteeringBank::project(const ComplexVector& z) const {
  Projection pr;
  pr.c = sp_.adjoint() * z;
  pr.zsz = std::real(z.dot(s_ * z));
  return pr;
}

double SteeringBank::mf(const Projection& pr, int d) const { return std::norm(pr.c[d]) / gain_[d]; }

double SteeringBank::nmf(const Projection& pr, int d) const {
  if (!(pr.zsz > 0.0)) throw InvalidArgument("nmf: zero snapshot");
  return std::clamp(std::norm(pr.c[d]) / (gain_[d] * pr.zsz), 0.0, 1.0);
}

double SteeringBank::stat(DetectorKind kind, const Projection& pr, int d) const {
  return is_normalized(kind) ? nmf(pr, d) : mf(pr, d);
}

}  // namespace radood
