#pragma once

// Closed-form detection statistics: matched filter (MF), normalized matched
// filter (NMF) and their adaptive plug-in versions.

#include <span>
#include <string>

#include "radood/covest.hpp"
#include "radood/linalg.hpp"

namespace radood {

enum class DetectorKind { MF, NMF, AMF_SCM, ANMF_SCM, ANMF_Tyler };

std::string to_string(DetectorKind kind);
DetectorKind parse_detector_kind(const std::string& s);
bool is_normalized(DetectorKind kind);

struct DetectorStatistic {
  double value = 0.0;
  DetectorKind kind = DetectorKind::MF;
  int d = 0;
};

// |p^H S z|^2 / (p^H S p) with S = Sigma^{-1}.
double mf_stat(const ComplexVector& z, const ComplexVector& p, const HermitianMatrix& sigma_inv);
// |p^H S z|^2 / ((p^H S p)(z^H S z)), clamped to [0, 1].
double nmf_stat(const ComplexVector& z, const ComplexVector& p, const HermitianMatrix& sigma_inv);

// Inverts the estimate and evaluates the MF (AMF-SCM) or NMF (ANMF-*) form.
// The estimate must be of the kind the detector names, an oracle, or a
// ridge-regularized estimate.
DetectorStatistic adaptive_stat(DetectorKind kind, const ComplexVector& z, const ComplexVector& p,
                                const CovarianceEstimate& est, int d = 0);

// Precomputed S p_d for every Doppler bin d of one inverse covariance S.
// Evaluating all bins for a snapshot costs one m x m product.
class SteeringBank {
 public:
  SteeringBank() = default;
  explicit SteeringBank(const HermitianMatrix& sigma_inv);

  int bins() const noexcept { return static_cast<int>(gain_.size()); }

  struct Projection {
    ComplexVector c;  // c_d = p_d^H S z
    double zsz = 0.0; // z^H S z
  };
  Projection project(const ComplexVector& z) const;

  double mf(const Projection& pr, int d) const;
  double nmf(const Projection& pr, int d) const;
  double stat(DetectorKind kind, const Projection& pr, int d) const;

 private:
  ComplexMatrix s_;        // S
  ComplexMatrix sp_;       // columns S p_d
  Eigen::VectorXd gain_;   // p_d^H S p_d
};

}  // namespace radood
