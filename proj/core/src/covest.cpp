#include "radood/covest.hpp"

#include <cmath>
#include <string>

#include "radood/errors.hpp"

namespace radood {

std::string to_string(CovarianceKind kind) {
  switch (kind) {
    case CovarianceKind::SCM: return "SCM";
    case CovarianceKind::TylerFP: return "TylerFP";
    case CovarianceKind::Oracle: return "Oracle";
    case CovarianceKind::RidgeRegularized: return "RidgeRegularized";
  }
  return "?";
}

ComplexMatrix stack_columns(std::span<const ComplexVector> z) {
  if (z.empty()) throw InvalidArgument("no secondary vectors supplied");
  const Eigen::Index m = z.front().size();
  ComplexMatrix out(m, static_cast<Eigen::Index>(z.size()));
  for (std::size_t k = 0; k < z.size(); ++k) {
    if (z[k].size() != m) throw InvalidArgument("secondary vectors have unequal lengths");
    out.col(static_cast<Eigen::Index>(k)) = z[k];
  }
  return out;
}

CovarianceEstimate scm(const ComplexMatrix& z) {
  if (z.cols() == 0 || z.rows() == 0) throw InvalidArgument("scm: empty secondary data");
  const auto k = static_cast<double>(z.cols());
  ComplexMatrix r = (z * z.adjoint()) / k;
  return {HermitianMatrix(r, 1e-9), CovarianceKind::SCM, static_cast<int>(z.cols())};
}

CovarianceEstimate scm(std::span<const ComplexVector> z) { return scm(stack_columns(z)); }

CovarianceEstimate tyler_fp(const ComplexMatrix& z, const TylerOptions& opts, TylerReport* report) {
  const Eigen::Index m = z.rows();
  const Eigen::Index k = z.cols();
  if (m == 0 || k == 0) throw InvalidArgument("tyler_fp: empty secondary data");
  if (k <= m) {
    throw InvalidArgument("tyler_fp: need K > m secondary vectors (K=" + std::to_string(k) +
                          ", m=" + std::to_string(m) + ")");
  }

  // Only the directions z_k / |z_k| enter the fixed point; normalizing up
  // front makes the estimate invariant to per-snapshot positive scaling.
  ComplexMatrix u(m, k);
  for (Eigen::Index j = 0; j < k; ++j) {
    const double n = z.col(j).norm();
    if (!(n > 0.0) || !std::isfinite(n)) {
      throw InvalidArgument("tyler_fp: secondary vector " + std::to_string(j) + " is zero or non-finite");
    }
    u.col(j) = z.col(j) / n;
  }

  const double md = static_cast<double>(m);
  ComplexMatrix sigma = ComplexMatrix::Identity(m, m);
  ComplexMatrix next(m, m), w(m, k), scaled(m, k);
  Eigen::LLT<ComplexMatrix> llt(m);
  double residual = 0.0;
  if (report) {
    report->iterations = 0;
    report->residuals.clear();
  }
  for (int it = 1; it <= opts.max_iter; ++it) {
    llt.compute(sigma);
    if (llt.info() != Eigen::Success) throw SingularMatrix("tyler_fp: iterate lost positive definiteness");
    // q_j = u_j^H sigma^{-1} u_j = |L^{-1} u_j|^2.
    w = u;
    llt.matrixL().solveInPlace(w);
    for (Eigen::Index j = 0; j < k; ++j) scaled.col(j) = u.col(j) / std::sqrt(w.col(j).squaredNorm());
    // (m / K) sum_j u_j u_j^H / q_j, built as a Hermitian rank-K update.
    next.setZero();
    next.selfadjointView<Eigen::Lower>().rankUpdate(scaled, md / static_cast<double>(k));
    for (Eigen::Index c = 0; c < m; ++c) {
      next(c, c) = Complex(next(c, c).real(), 0.0);
      for (Eigen::Index r = 0; r < c; ++r) next(r, c) = std::conj(next(c, r));
    }
    next *= md / next.diagonal().real().sum();
    residual = (next - sigma).norm() / sigma.norm();
    sigma.swap(next);
    if (report) {
      report->iterations = it;
      report->residuals.push_back(residual);
    }
    if (residual < opts.tol) {
      return {HermitianMatrix(sigma), CovarianceKind::TylerFP, static_cast<int>(k)};
    }
  }
  throw ConvergenceFailure("tyler_fp: no convergence after " + std::to_string(opts.max_iter) +
                               " iterations (last residual " + std::to_string(residual) + ")",
                           residual, opts.max_iter);
}

CovarianceEstimate tyler_fp(std::span<const ComplexVector> z, const TylerOptions& opts, TylerReport* report) {
  return tyler_fp(stack_columns(z), opts, report);
}

HermitianMatrix ridge_regularize(const HermitianMatrix& r, double eps_ridge) {
  if (!(eps_ridge > 0.0)) throw InvalidArgument("ridge_regularize: eps_ridge must be positive");
  const double m = static_cast<double>(r.dim());
  ComplexMatrix out = r.matrix();
  out.diagonal().array() += eps_ridge * r.trace() / m;
  return HermitianMatrix(out);
}

CovarianceEstimate ridge_regularize(const CovarianceEstimate& r, double eps_ridge) {
  return {ridge_regularize(r.matrix, eps_ridge), CovarianceKind::RidgeRegularized, r.k_samples};
}

CovarianceEstimate oracle_estimate(const HermitianMatrix& sigma) {
  return {sigma, CovarianceKind::Oracle, 0};
}

}  // namespace radood
