#include "cvae_layers.hpp"

#include <cmath>

namespace radood::layers {

ComplexMatrix im2col(const ComplexMatrix& x, int k) {
  const int c = static_cast<int>(x.rows());
  const int l = static_cast<int>(x.cols());
  const int pad = (k - 1) / 2;
  ComplexMatrix col = ComplexMatrix::Zero(c * k, l);
  for (int i = 0; i < c; ++i) {
    for (int j = 0; j < k; ++j) {
      const int shift = j - pad;
      const int t0 = std::max(0, -shift);
      const int t1 = std::min(l, l - shift);
      for (int t = t0; t < t1; ++t) col(i * k + j, t) = x(i, t + shift);
    }
  }
  return col;
}

ComplexMatrix col2im(const ComplexMatrix& g_col, int channels, int length, int k) {
  const int pad = (k - 1) / 2;
  ComplexMatrix g = ComplexMatrix::Zero(channels, length);
  for (int i = 0; i < channels; ++i) {
    for (int j = 0; j < k; ++j) {
      const int shift = j - pad;
      const int t0 = std::max(0, -shift);
      const int t1 = std::min(length, length - shift);
      for (int t = t0; t < t1; ++t) g(i, t + shift) += g_col(i * k + j, t);
    }
  }
  return g;
}

ComplexMatrix conv_forward(const ComplexMatrix& w, const ComplexVector& b, const ComplexMatrix& xcol) {
  ComplexMatrix y = w * xcol;
  y.colwise() += b;
  return y;
}

ComplexMatrix conv_backward(const ComplexMatrix& w, const ComplexMatrix& xcol, const ComplexMatrix& g_y,
                            ComplexMatrix& g_w, ComplexVector& g_b) {
  g_w.noalias() += g_y * xcol.adjoint();
  g_b += g_y.rowwise().sum();
  return w.adjoint() * g_y;
}

ComplexMatrix modrelu_forward(const ComplexMatrix& x, const RealVector& b) {
  ComplexMatrix y(x.rows(), x.cols());
  for (Eigen::Index c = 0; c < x.rows(); ++c) {
    for (Eigen::Index t = 0; t < x.cols(); ++t) {
      const double r = std::abs(x(c, t));
      const double a = r + b[c];
      y(c, t) = (r > 0.0 && a > 0.0) ? x(c, t) * (a / r) : Complex(0.0, 0.0);
    }
  }
  return y;
}

ComplexMatrix modrelu_backward(const ComplexMatrix& x, const RealVector& b, const ComplexMatrix& g_y,
                               RealVector& g_b) {
  ComplexMatrix g_x = ComplexMatrix::Zero(x.rows(), x.cols());
  for (Eigen::Index c = 0; c < x.rows(); ++c) {
    for (Eigen::Index t = 0; t < x.cols(); ++t) {
      const double r = std::abs(x(c, t));
      if (!(r > 0.0) || !(r + b[c] > 0.0)) continue;
      const Complex u = x(c, t) / r;
      const Complex g = g_y(c, t);
      const double ug = u.real() * g.real() + u.imag() * g.imag();
      g_x(c, t) = g + (b[c] / r) * (g - u * ug);
      g_b[c] += ug;
    }
  }
  return g_x;
}

ComplexMatrix crelu_forward(const ComplexMatrix& x) {
  ComplexMatrix y(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    y(i) = Complex(std::max(0.0, x(i).real()), std::max(0.0, x(i).imag()));
  }
  return y;
}

ComplexMatrix crelu_backward(const ComplexMatrix& x, const ComplexMatrix& g_y) {
  ComplexMatrix g(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    g(i) = Complex(x(i).real() > 0.0 ? g_y(i).real() : 0.0, x(i).imag() > 0.0 ? g_y(i).imag() : 0.0);
  }
  return g;
}

ComplexMatrix maxpool_forward(const ComplexMatrix& x, int pool, IndexMatrix& arg) {
  const Eigen::Index l_out = x.cols() / pool;
  ComplexMatrix y(x.rows(), l_out);
  arg.resize(x.rows(), l_out);
  for (Eigen::Index c = 0; c < x.rows(); ++c) {
    for (Eigen::Index t = 0; t < l_out; ++t) {
      Eigen::Index best = t * pool;
      double best_abs = std::norm(x(c, best));
      for (int j = 1; j < pool; ++j) {
        const double a = std::norm(x(c, t * pool + j));
        if (a > best_abs) {
          best_abs = a;
          best = t * pool + j;
        }
      }
      y(c, t) = x(c, best);
      arg(c, t) = static_cast<int>(best);
    }
  }
  return y;
}

ComplexMatrix maxpool_backward(const ComplexMatrix& g_y, const IndexMatrix& arg, int length_in) {
  ComplexMatrix g = ComplexMatrix::Zero(g_y.rows(), length_in);
  for (Eigen::Index c = 0; c < g_y.rows(); ++c) {
    for (Eigen::Index t = 0; t < g_y.cols(); ++t) g(c, arg(c, t)) += g_y(c, t);
  }
  return g;
}

ComplexMatrix upsample_forward(const ComplexMatrix& x, int s) {
  ComplexMatrix u = ComplexMatrix::Zero(x.rows(), x.cols() * s);
  for (Eigen::Index t = 0; t < x.cols(); ++t) u.col(t * s) = x.col(t);
  return u;
}

ComplexMatrix upsample_backward(const ComplexMatrix& g_u, int s) {
  ComplexMatrix g(g_u.rows(), g_u.cols() / s);
  for (Eigen::Index t = 0; t < g.cols(); ++t) g.col(t) = g_u.col(t * s);
  return g;
}

ComplexMatrix scale_rows(const ComplexMatrix& x, const RealVector& scale) {
  return scale.cwiseInverse().cast<Complex>().asDiagonal() * x;
}

double softplus(double x) { return x > 30.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace radood::layers
