#pragma once

// Covariance estimation from secondary data: sample covariance, Tyler's
// fixed-point shape estimator and trace-scaled ridge regularization.

#include <span>
#include <string>
#include <vector>

#include "radood/linalg.hpp"

namespace radood {

enum class CovarianceKind { SCM, TylerFP, Oracle, RidgeRegularized };

std::string to_string(CovarianceKind kind);

struct CovarianceEstimate {
  HermitianMatrix matrix;
  CovarianceKind kind = CovarianceKind::SCM;
  int k_samples = 0;
};

// (1/K) sum_k z_k z_k^H. Secondary data are the columns of `z` (m x K).
CovarianceEstimate scm(const ComplexMatrix& z);
CovarianceEstimate scm(std::span<const ComplexVector> z);

struct TylerOptions {
  double tol = 1e-10;
  int max_iter = 100;
};

struct TylerReport {
  int iterations = 0;
  std::vector<double> residuals;  // relative Frobenius update per iteration
};

// Tyler's fixed point, iterated from the identity and trace-normalized to m
// every iteration. Stops once the relative Frobenius update drops below tol.
CovarianceEstimate tyler_fp(const ComplexMatrix& z, const TylerOptions& opts = {}, TylerReport* report = nullptr);
CovarianceEstimate tyler_fp(std::span<const ComplexVector> z, const TylerOptions& opts = {},
                            TylerReport* report = nullptr);

// R + eps * (tr(R) / m) * I.
HermitianMatrix ridge_regularize(const HermitianMatrix& r, double eps_ridge);
CovarianceEstimate ridge_regularize(const CovarianceEstimate& r, double eps_ridge);

CovarianceEstimate oracle_estimate(const HermitianMatrix& sigma);

ComplexMatrix stack_columns(std::span<const ComplexVector> z);

}  // namespace radood
