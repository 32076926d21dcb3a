#include "radood/scene.hpp"

#include <cmath>
#include <set>
#include <string>

#include "radood/errors.hpp"

namespace radood {

bool splits_disjoint() {
  const std::set<std::uint64_t> tags{tag(StreamTag::Train), tag(StreamTag::Eval), tag(StreamTag::Test),
                                     tag(StreamTag::Holdout)};
  return tags.size() == 4;
}

Scene::Scene(const DisturbanceSpec& spec, int k_secondary, const TylerOptions& tyler, double eps_ridge)
    : generator_(spec), k_(k_secondary), tyler_(tyler), eps_ridge_(eps_ridge) {
  if (k_secondary < spec.m) throw InvalidArgument("Scene: K must be >= m");
  oracle_bank_ = SteeringBank(herm_inverse(generator_.covariance()));
  oracle_inv_sqrt_ = herm_inv_sqrt(generator_.covariance());
  for (int d = 0; d < spec.m; ++d) steer_.push_back(steering(d, spec.m));
}

Trial Scene::draw(std::uint64_t seed, StreamTag split, std::uint64_t index, bool with_secondary) const {
  if (!splits_disjoint()) throw std::logic_error("data split tags overlap");
  Rng rng = substream(seed, {tag(split), index});
  Trial t;
  // Fixed draw order: secondary, primary, phase. The secondary block is
  // always drawn so the primary does not depend on what a roster needs.
  ComplexMatrix sec = generator_.draw_many(rng, k_);
  if (with_secondary) t.secondary = std::move(sec);
  t.c = generator_.draw(rng);
  t.phase = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
  return t;
}

Scene::Estimates Scene::estimate(const Trial& t, Needs needs) const {
  if (!needs.any()) return {};
  if (t.secondary.cols() == 0) throw InvalidArgument("Scene: trial drawn without secondary data");
  return estimate(t.secondary, needs);
}

Scene::Estimates Scene::estimate(const ComplexMatrix& secondary, Needs needs) const {
  Estimates e;
  if (!needs.any()) return e;
  if (secondary.rows() != m()) throw InvalidArgument("Scene: secondary data must have m rows");
  if ((needs.scm && secondary.cols() < m()) || (needs.tyler && secondary.cols() <= m())) {
    throw InsufficientData("Scene: " + std::to_string(secondary.cols()) + " secondary snapshots for m = " +
                           std::to_string(m()));
  }
  if (needs.scm || needs.local) {
    const CovarianceEstimate s = scm(secondary);
    if (needs.scm) e.scm = SteeringBank(herm_inverse(s.matrix));
    if (needs.local) e.local_inv_sqrt = herm_inv_sqrt(ridge_regularize(s.matrix, eps_ridge_));
  }
  if (needs.tyler) e.tyler = SteeringBank(herm_inverse(tyler_fp(secondary, tyler_).matrix));
  return e;
}

ComplexVector Scene::snapshot(const Trial& t, double snr_linear, int d) const {
  if (snr_linear == 0.0) return t.c;
  return t.c + target_amplitude(snr_linear, m(), t.phase) * steer_.at(static_cast<std::size_t>(d));
}

void Scene::classical(DetectorKind kind, const ComplexVector& z, const Estimates& est, double* out) const {
  const SteeringBank* bank = &oracle_bank_;
  if (kind == DetectorKind::AMF_SCM || kind == DetectorKind::ANMF_SCM) {
    if (!est.scm) throw DependencyError("Scene: SCM estimate missing");
    bank = &*est.scm;
  } else if (kind == DetectorKind::ANMF_Tyler) {
    if (!est.tyler) throw DependencyError("Scene: Tyler estimate missing");
    bank = &*est.tyler;
  }
  const auto pr = bank->project(z);
  for (int d = 0; d < m(); ++d) out[d] = bank->stat(kind, pr, d);
}

ComplexVector Scene::profile(const ComplexVector& z, Preprocessing pre, const Estimates& est) const {
  switch (pre) {
    case Preprocessing::Raw: return dft_unitary(z);
    case Preprocessing::Oracle: return dft_unitary(oracle_inv_sqrt_.matrix() * z);
    case Preprocessing::Local:
      if (!est.local_inv_sqrt) throw DependencyError("Scene: local whitening estimate missing");
      return dft_unitary(est.local_inv_sqrt->matrix() * z);
  }
  return {};
}

Scene::Needs needs_for(const std::vector<DetectorId>& roster) {
  Scene::Needs n;
  for (const auto& id : roster) {
    if (id.name == "AMF-SCM" || id.name == "ANMF-SCM") n.scm = true;
    if (id.name == "ANMF-Tyler" || id.name == kFusedName) n.tyler = true;
    if (id.learned() && id.pre == Preprocessing::Local) n.local = true;
  }
  return n;
}

}  // namespace radood
