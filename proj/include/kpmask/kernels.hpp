#pragma once

// OpenMP-parallel compute kernels. Every kernel here has a serial counterpart
// with the same signature in reference.hpp; the unit tests hold the two to
// agreement and bench/ measures the gap.
//
// Layout conventions: activations are NCHW, convolution weights are
// [Cout, Cin, k, k] (stored in a Tensor as n=Cout, c=Cin, h=w=k), stride 1 with
// "same" zero padding k/2. Keypoints are N x K x 1 x 2 holding (x, y) in
// normalized [-1, 1] coordinates, cell centers at (2j + 1) / w - 1.

#include <vector>

#include "kpmask/tensor.hpp"

namespace kpmask::kernels {

/// C[M x N] += A[M x K] * B[K x N]; all row-major with explicit leading dims.
void gemm(int m, int n, int k, const double* a, int lda, const double* b, int ldb, double* c, int ldc);

Tensor conv2d_forward(const Tensor& input, const Tensor& weight, const Tensor* bias);
Tensor conv2d_backward_input(const Tensor& grad_out, const Tensor& weight, const Shape& input_shape);
Tensor conv2d_backward_weight(const Tensor& input, const Tensor& grad_out, int kernel);
Tensor conv2d_backward_bias(const Tensor& grad_out);

Tensor avg_pool_forward(const Tensor& input, int factor);
Tensor avg_pool_backward(const Tensor& grad_out, int factor);

/// 2x2 max pooling; `argmax` receives the flat input index of each winner.
Tensor max_pool2_forward(const Tensor& input, std::vector<std::size_t>& argmax);
Tensor max_pool2_backward(const Tensor& grad_out, const std::vector<std::size_t>& argmax, const Shape& input_shape);

Tensor upsample_nearest_forward(const Tensor& input, int factor);
Tensor upsample_nearest_backward(const Tensor& grad_out, int factor);

struct BatchNormSaved {
    Tensor normalized;           // x_hat
    std::vector<double> mean;    // per channel
    std::vector<double> inv_std; // per channel
};

/// Normalizes with batch statistics over (N, H, W).
Tensor batch_norm_train(const Tensor& input, const Tensor& gamma, const Tensor& beta, double eps,
                        BatchNormSaved& saved);
Tensor batch_norm_eval(const Tensor& input, const Tensor& gamma, const Tensor& beta, const Tensor& running_mean,
                       const Tensor& running_var, double eps);
/// Returns grad wrt input; writes grad wrt gamma and beta.
Tensor batch_norm_backward(const Tensor& grad_out, const Tensor& gamma, const BatchNormSaved& saved,
                           Tensor& grad_gamma, Tensor& grad_beta);

/// exp(x / temperature) normalized over each channel's spatial grid.
Tensor spatial_softmax_forward(const Tensor& logits, double temperature);
Tensor spatial_softmax_backward(const Tensor& probs, const Tensor& grad_probs, double temperature);

/// Probability-weighted mean of cell-center coordinates, per channel.
Tensor soft_argmax_forward(const Tensor& probs);
Tensor soft_argmax_backward(const Tensor& grad_kp, const Shape& probs_shape);

/// exp(-|coord - kp|^2 / (2 variance)) for each keypoint on an h x w grid.
Tensor gaussians_forward(const Tensor& keypoints, double variance, int h, int w);
Tensor gaussians_backward(const Tensor& keypoints, const Tensor& gaussians, const Tensor& grad_gaussians,
                          double variance);

/// Cell-center coordinate along an axis of `size` cells.
inline double cell_center(int index, int size) { return (2.0 * index + 1.0) / size - 1.0; }

}  // namespace kpmask::kernels
