#include "radood/linalg.hpp"

#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include "radood/errors.hpp"

namespace radood {

namespace {

// Twiddles exp(-2 pi i j / n), j = 0..n-1, cached per thread for the last length used.
const std::vector<Complex>& twiddles(Eigen::Index n) {
  thread_local std::vector<Complex> table;
  thread_local Eigen::Index cached_n = 0;
  if (cached_n != n) {
    table.resize(static_cast<std::size_t>(n));
    for (Eigen::Index j = 0; j < n; ++j) {
      const double angle = -2.0 * std::numbers::pi * static_cast<double>(j) / static_cast<double>(n);
      table[static_cast<std::size_t>(j)] = Complex(std::cos(angle), std::sin(angle));
    }
    cached_n = n;
  }
  return table;
}

bool is_power_of_two(Eigen::Index n) { return n > 0 && (n & (n - 1)) == 0; }

void fft_radix2_inplace(ComplexVector& a) {
  const Eigen::Index n = a.size();
  for (Eigen::Index i = 1, j = 0; i < n; ++i) {
    Eigen::Index bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  const auto& tw = twiddles(n);
  for (Eigen::Index len = 2; len <= n; len <<= 1) {
    const Eigen::Index step = n / len;
    const Eigen::Index half = len / 2;
    for (Eigen::Index start = 0; start < n; start += len) {
      for (Eigen::Index k = 0; k < half; ++k) {
        const Complex w = tw[static_cast<std::size_t>(k * step)];
        const Complex u = a[start + k];
        const Complex v = a[start + k + half] * w;
        a[start + k] = u + v;
        a[start + k + half] = u - v;
      }
    }
  }
}

}  // namespace

HermitianMatrix::HermitianMatrix(const ComplexMatrix& a, double rel_tol) {
  if (a.rows() != a.cols() || a.rows() == 0) {
    throw InvalidArgument("HermitianMatrix: expected a non-empty square matrix, got " +
                          std::to_string(a.rows()) + "x" + std::to_string(a.cols()));
  }
  const double scale = a.norm();
  const double asym = (a - a.adjoint()).norm();
  if (!std::isfinite(scale) || asym > rel_tol * scale) {
    throw InvalidArgument("HermitianMatrix: input is not Hermitian (relative asymmetry " +
                          std::to_string(scale > 0 ? asym / scale : asym) + ")");
  }
  a_ = 0.5 * (a + a.adjoint());
}

HermitianMatrix HermitianMatrix::identity(Eigen::Index m) {
  return HermitianMatrix(ComplexMatrix::Identity(m, m));
}

HermitianMatrix HermitianMatrix::diagonal(const RealVector& d) {
  return HermitianMatrix(ComplexMatrix(d.cast<Complex>().asDiagonal()));
}

RealVector HermitianMatrix::eigenvalues() const {
  Eigen::SelfAdjointEigenSolver<ComplexMatrix> es(a_, Eigen::EigenvaluesOnly);
  return es.eigenvalues();
}

bool is_finite(const ComplexVector& v) { return v.allFinite(); }
bool is_finite(const ComplexMatrix& a) { return a.allFinite(); }

HermitianMatrix toeplitz(double rho, int m) {
  if (!(rho >= 0.0 && rho < 1.0)) {
    throw InvalidArgument("toeplitz: rho must lie in [0, 1), got " + std::to_string(rho));
  }
  if (m <= 0) throw InvalidArgument("toeplitz: m must be positive");
  ComplexMatrix t(m, m);
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < m; ++j) t(i, j) = std::pow(rho, std::abs(i - j));
  }
  return HermitianMatrix(t);
}

HermitianMatrix herm_inverse(const HermitianMatrix& a) {
  Eigen::LLT<ComplexMatrix> llt(a.matrix());
  const Eigen::Index m = a.dim();
  if (llt.info() == Eigen::Success) {
    ComplexMatrix inv = llt.solve(ComplexMatrix::Identity(m, m));
    return HermitianMatrix(0.5 * (inv + inv.adjoint()), 1e-6);
  }
  Eigen::SelfAdjointEigenSolver<ComplexMatrix> es(a.matrix());
  const RealVector& lam = es.eigenvalues();
  if (lam.cwiseAbs().minCoeff() < 1e-300) {
    throw SingularMatrix("herm_inverse: matrix is singular");
  }
  const ComplexMatrix& v = es.eigenvectors();
  ComplexMatrix inv = v * lam.cwiseInverse().cast<Complex>().asDiagonal() * v.adjoint();
  return HermitianMatrix(0.5 * (inv + inv.adjoint()), 1e-6);
}

HermitianMatrix herm_inv_sqrt(const HermitianMatrix& a, double floor) {
  if (!(floor > 0.0)) throw InvalidArgument("herm_inv_sqrt: floor must be positive");
  Eigen::SelfAdjointEigenSolver<ComplexMatrix> es(a.matrix());
  if (es.info() != Eigen::Success) throw SingularMatrix("herm_inv_sqrt: eigen-decomposition failed");
  RealVector lam = es.eigenvalues();
  const double lam_max = lam.maxCoeff();
  if (!(lam_max >= 1e-300)) {
    throw SingularMatrix("herm_inv_sqrt: all eigenvalues are below 1e-300");
  }
  const double lam_floor = floor * lam_max;
  for (Eigen::Index i = 0; i < lam.size(); ++i) lam[i] = 1.0 / std::sqrt(std::max(lam[i], lam_floor));
  const ComplexMatrix& v = es.eigenvectors();
  ComplexMatrix b = v * lam.cast<Complex>().asDiagonal() * v.adjoint();
  return HermitianMatrix(0.5 * (b + b.adjoint()), 1e-6);
}

HermitianMatrix herm_inv_sqrt(const ComplexMatrix& a, double floor) {
  return herm_inv_sqrt(HermitianMatrix(a), floor);
}

ComplexVector dft_unitary_direct(const ComplexVector& v) {
  const Eigen::Index m = v.size();
  if (m == 0) throw InvalidArgument("dft_unitary: empty vector");
  const auto& tw = twiddles(m);
  ComplexVector out(m);
  for (Eigen::Index k = 0; k < m; ++k) {
    Complex acc(0.0, 0.0);
    for (Eigen::Index n = 0; n < m; ++n) acc += v[n] * tw[static_cast<std::size_t>((k * n) % m)];
    out[k] = acc;
  }
  return out / std::sqrt(static_cast<double>(m));
}

ComplexVector dft_unitary(const ComplexVector& v) {
  const Eigen::Index m = v.size();
  if (m == 0) throw InvalidArgument("dft_unitary: empty vector");
  if (!is_power_of_two(m) || m < 4) return dft_unitary_direct(v);
  ComplexVector out = v;
  fft_radix2_inplace(out);
  return out / std::sqrt(static_cast<double>(m));
}

ComplexVector idft_unitary(const ComplexVector& v) {
  return dft_unitary(v.conjugate()).conjugate();
}

Complex quad_form(const HermitianMatrix& a_inv, const ComplexVector& x, const ComplexVector& y) {
  const Eigen::Index m = a_inv.dim();
  if (x.size() != m || y.size() != m) {
    throw InvalidArgument("quad_form: dimension mismatch (" + std::to_string(m) + " vs " +
                          std::to_string(x.size()) + ", " + std::to_string(y.size()) + ")");
  }
  return x.dot(a_inv.matrix() * y);
}

}  // namespace radood
