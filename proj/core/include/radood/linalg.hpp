#pragma once

// Dense complex linear algebra shared by every module: Hermitian matrices,
// Toeplitz construction, inverse square roots, the unitary DFT and
// quadratic forms.

#include <complex>

#include <Eigen/Dense>

namespace radood {

using Complex = std::complex<double>;
using ComplexVector = Eigen::VectorXcd;
using ComplexMatrix = Eigen::MatrixXcd;
using RealVector = Eigen::VectorXd;

// A square complex matrix known to satisfy A = A^H.
//
// Construction checks the Hermitian property to a relative tolerance and
// then stores the exactly symmetrized matrix (A + A^H) / 2, so downstream
// eigen-solvers see a bit-exact Hermitian input.
class HermitianMatrix {
 public:
  HermitianMatrix() = default;
  explicit HermitianMatrix(const ComplexMatrix& a, double rel_tol = 1e-12);

  static HermitianMatrix identity(Eigen::Index m);
  static HermitianMatrix diagonal(const RealVector& d);

  const ComplexMatrix& matrix() const noexcept { return a_; }
  Eigen::Index dim() const noexcept { return a_.rows(); }
  double trace() const { return a_.diagonal().real().sum(); }
  RealVector eigenvalues() const;

 private:
  ComplexMatrix a_;
};

bool is_finite(const ComplexVector& v);
bool is_finite(const ComplexMatrix& a);

// {T(rho)}_{ij} = rho^|i-j|.
HermitianMatrix toeplitz(double rho, int m);

// Inverse of a Hermitian positive-definite matrix (Cholesky, with an
// eigen-decomposition fallback for near-singular input).
HermitianMatrix herm_inverse(const HermitianMatrix& a);

// B = A^{-1/2} through the Hermitian eigen-decomposition. Eigenvalues are
// floored at floor * max(eig) before inversion.
HermitianMatrix herm_inv_sqrt(const HermitianMatrix& a, double floor = 1e-12);
HermitianMatrix herm_inv_sqrt(const ComplexMatrix& a, double floor = 1e-12);

// Unitary DFT: X_k = m^{-1/2} sum_n x_n exp(-2 pi i k n / m).
// Power-of-two lengths use a radix-2 path; everything else the direct sum.
ComplexVector dft_unitary(const ComplexVector& v);
ComplexVector idft_unitary(const ComplexVector& v);
ComplexVector dft_unitary_direct(const ComplexVector& v);

// x^H A_inv y.
Complex quad_form(const HermitianMatrix& a_inv, const ComplexVector& x, const ComplexVector& y);

}  // namespace radood
