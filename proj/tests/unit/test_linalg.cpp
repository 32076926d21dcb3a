#include <gtest/gtest.h>

#include <cmath>

#include "radood/errors.hpp"
#include "radood/linalg.hpp"
#include "radood/rng.hpp"
#include "radood/sim.hpp"

using namespace radood;

namespace {

ComplexMatrix random_matrix(Rng& rng, int rows, int cols) {
  ComplexNormal cn;
  ComplexMatrix a(rows, cols);
  for (int j = 0; j < cols; ++j)
    for (int i = 0; i < rows; ++i) a(i, j) = cn(rng);
  return a;
}

HermitianMatrix random_pd(Rng& rng, int m) {
  const ComplexMatrix g = random_matrix(rng, m, 2 * m);
  ComplexMatrix a = g * g.adjoint() / (2.0 * m);
  a += 0.05 * ComplexMatrix::Identity(m, m);
  return HermitianMatrix(a);
}

double rel_frob(const ComplexMatrix& a, const ComplexMatrix& b) { return (a - b).norm() / b.norm(); }

}  // namespace

TEST(Toeplitz, SmallExample) {
  const auto t = toeplitz(0.5, 3).matrix();
  const double want[3][3] = {{1, .5, .25}, {.5, 1, .5}, {.25, .5, 1}};
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) EXPECT_DOUBLE_EQ(t(i, j).real(), want[i][j]);
}

TEST(Toeplitz, ZeroRhoIsIdentity) {
  EXPECT_EQ(toeplitz(0.0, 4).matrix(), ComplexMatrix::Identity(4, 4));
}

TEST(Toeplitz, ConditionNumberMatchesDenseSolver) {
  const auto t = toeplitz(0.9, 16);
  // Independent: real symmetric eigensolver on an explicitly built matrix.
  Eigen::MatrixXd r(16, 16);
  for (int i = 0; i < 16; ++i)
    for (int j = 0; j < 16; ++j) r(i, j) = std::pow(0.9, std::abs(i - j));
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(r);
  const double want = es.eigenvalues().maxCoeff() / es.eigenvalues().minCoeff();
  const auto ev = t.eigenvalues();
  EXPECT_NEAR(ev.maxCoeff() / ev.minCoeff(), want, 1e-8 * want);
}

TEST(Toeplitz, PositiveDefiniteOverGrid) {
  for (double rho : {0.0, 0.25, 0.5, 0.9})
    for (int m = 1; m <= 32; ++m) EXPECT_GT(toeplitz(rho, m).eigenvalues().minCoeff(), 0.0) << rho << " " << m;
}

TEST(Toeplitz, RejectsBadArguments) {
  EXPECT_THROW(toeplitz(1.0, 4), InvalidArgument);
  EXPECT_THROW(toeplitz(-0.1, 4), InvalidArgument);
  EXPECT_THROW(toeplitz(0.5, 0), InvalidArgument);
}

TEST(Hermitian, RejectsNonHermitian) {
  ComplexMatrix a = ComplexMatrix::Identity(3, 3);
  a(0, 1) = Complex(1, 1);
  EXPECT_THROW(HermitianMatrix{a}, InvalidArgument);
  EXPECT_THROW(herm_inv_sqrt(a), InvalidArgument);
}

TEST(InvSqrt, IdentityAndDiagonal) {
  EXPECT_LT((herm_inv_sqrt(HermitianMatrix::identity(5), 1e-6).matrix() - ComplexMatrix::Identity(5, 5)).norm(),
            1e-14);
  RealVector d(2);
  d << 4.0, 1.0;
  const auto b = herm_inv_sqrt(HermitianMatrix::diagonal(d)).matrix();
  EXPECT_NEAR(b(0, 0).real(), 0.5, 1e-14);
  EXPECT_NEAR(b(1, 1).real(), 1.0, 1e-14);
  EXPECT_NEAR(std::abs(b(0, 1)), 0.0, 1e-14);
}

TEST(InvSqrt, MultiplyBackToeplitz) {
  const auto a = toeplitz(0.5, 8);
  const auto b = herm_inv_sqrt(a).matrix();
  EXPECT_LT((b * a.matrix() * b - ComplexMatrix::Identity(8, 8)).norm(), 1e-10);
}

TEST(InvSqrt, RandomPositiveDefinite) {
  for (int trial = 0; trial < 100; ++trial) {
    Rng rng = substream(11, {static_cast<std::uint64_t>(trial)});
    const int m = 1 + trial % 32;
    const auto a = random_pd(rng, m);
    const auto b = herm_inv_sqrt(a);
    EXPECT_GT(b.eigenvalues().minCoeff(), 0.0);
    const ComplexMatrix id = ComplexMatrix::Identity(m, m);
    EXPECT_LT((b.matrix() * a.matrix() * b.matrix() - id).norm() / id.norm(), 1e-10) << "m=" << m;
  }
}

TEST(InvSqrt, FloorsNearSingular) {
  RealVector d(3);
  d << 1.0, 1e-20, 0.0;
  const ComplexMatrix b = herm_inv_sqrt(HermitianMatrix::diagonal(d), 1e-6).matrix();
  EXPECT_TRUE(b.allFinite());
  EXPECT_NEAR(b(2, 2).real(), 1e3, 1e-6);
  EXPECT_THROW(herm_inv_sqrt(HermitianMatrix::diagonal(RealVector::Zero(3))), SingularMatrix);
  EXPECT_THROW(herm_inv_sqrt(HermitianMatrix::identity(3), 0.0), InvalidArgument);
}

TEST(Dft, BasisVector) {
  ComplexVector e0 = ComplexVector::Zero(4);
  e0(0) = 1.0;
  const auto x = dft_unitary(e0);
  for (int k = 0; k < 4; ++k) EXPECT_NEAR(std::abs(x(k) - Complex(0.5, 0)), 0.0, 1e-15);
}

TEST(Dft, SteeringConcentratesInOneBin) {
  // The transform uses exp(-2 pi i k n / m), so p(d) lands in bin d.
  for (int d = 0; d < 16; ++d) {
    const auto x = dft_unitary(steering(d, 16));
    for (int k = 0; k < 16; ++k) EXPECT_NEAR(std::abs(x(k)), k == d ? 4.0 : 0.0, 1e-12);
  }
}

TEST(Dft, NormAndRoundTripAllLengths) {
  Rng rng(5);
  for (int m = 1; m <= 64; ++m) {
    const ComplexVector v = random_matrix(rng, m, 1).col(0);
    const auto x = dft_unitary(v);
    EXPECT_NEAR(x.norm(), v.norm(), 1e-12 * v.norm()) << m;
    EXPECT_LT((idft_unitary(x) - v).norm(), 1e-12 * v.norm()) << m;
    EXPECT_LT((x - dft_unitary_direct(v)).norm(), 1e-10 * v.norm()) << m;
  }
  EXPECT_THROW(dft_unitary(ComplexVector()), InvalidArgument);
}

TEST(QuadForm, Examples) {
  const auto id = HermitianMatrix::identity(16);
  const auto p = steering(0, 16);
  EXPECT_NEAR(std::abs(quad_form(id, p, p) - Complex(16, 0)), 0.0, 1e-12);
  EXPECT_NEAR(std::abs(quad_form(id, p, steering(3, 16))), 0.0, 1e-12);

  const auto t = toeplitz(0.5, 16);
  const auto tinv = herm_inverse(t);
  const auto q = steering(2, 16);
  const ComplexVector solved = t.matrix().ldlt().solve(q);
  const Complex want = q.adjoint() * solved;
  EXPECT_NEAR(std::abs(quad_form(tinv, q, q) - want), 0.0, 1e-10 * std::abs(want));
  EXPECT_THROW(quad_form(id, p, steering(0, 8)), InvalidArgument);
}

TEST(QuadForm, NonnegativeForPositiveDefinite) {
  Rng rng(9);
  for (int trial = 0; trial < 200; ++trial) {
    const int m = 2 + trial % 20;
    const auto a_inv = herm_inverse(random_pd(rng, m));
    const ComplexVector x = random_matrix(rng, m, 1).col(0);
    const Complex v = quad_form(a_inv, x, x);
    EXPECT_GE(v.real(), 0.0);
    EXPECT_LT(std::abs(v.imag()), 1e-10 * v.real());
  }
}
