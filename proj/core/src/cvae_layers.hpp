#pragma once

// Layer primitives of the complex autoencoder. Activations are C x L
// matrices (channels by length). Backward functions take the packed
// gradient dL/dRe + i dL/dIm of the output.

#include <Eigen/Dense>

#include "radood/linalg.hpp"

namespace radood::layers {

using IndexMatrix = Eigen::Matrix<int, Eigen::Dynamic, Eigen::Dynamic>;

// (C*k) x L patch matrix of a same-padded convolution, pad (k-1)/2.
ComplexMatrix im2col(const ComplexMatrix& x, int k);
// Adjoint of im2col: scatters patch gradients back onto a C x L input.
ComplexMatrix col2im(const ComplexMatrix& g_col, int channels, int length, int k);

// y = W xcol + b 1^T with W of shape C_out x (C_in*k).
ComplexMatrix conv_forward(const ComplexMatrix& w, const ComplexVector& b, const ComplexMatrix& xcol);
// Accumulates g_w, g_b; returns the gradient wrt xcol.
ComplexMatrix conv_backward(const ComplexMatrix& w, const ComplexMatrix& xcol, const ComplexMatrix& g_y,
                            ComplexMatrix& g_w, ComplexVector& g_b);

// modReLU(x) = relu(|x| + b_c) x / |x|, zero at x = 0.
ComplexMatrix modrelu_forward(const ComplexMatrix& x, const RealVector& b);
ComplexMatrix modrelu_backward(const ComplexMatrix& x, const RealVector& b, const ComplexMatrix& g_y,
                               RealVector& g_b);

// CReLU(x) = relu(Re x) + i relu(Im x).
ComplexMatrix crelu_forward(const ComplexMatrix& x);
ComplexMatrix crelu_backward(const ComplexMatrix& x, const ComplexMatrix& g_y);

// Per channel, keeps the entry of largest modulus in each window of `pool`
// (first one on ties). `arg` receives the source index of every output.
ComplexMatrix maxpool_forward(const ComplexMatrix& x, int pool, IndexMatrix& arg);
ComplexMatrix maxpool_backward(const ComplexMatrix& g_y, const IndexMatrix& arg, int length_in);

// Zero insertion: u(c, t * s) = x(c, t).
ComplexMatrix upsample_forward(const ComplexMatrix& x, int s);
ComplexMatrix upsample_backward(const ComplexMatrix& g_u, int s);

// Row c divided by scale[c].
ComplexMatrix scale_rows(const ComplexMatrix& x, const RealVector& scale);

double softplus(double x);
double sigmoid(double x);

}  // namespace radood::layers
