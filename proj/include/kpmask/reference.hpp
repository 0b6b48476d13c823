#pragma once

// Serial, loop-for-loop reference versions of the kernels in kernels.hpp.
// They are deliberately naive and exist only to check the parallel kernels
// and to anchor the benchmark.

#include <vector>

#include "kpmask/kernels.hpp"
#include "kpmask/tensor.hpp"

namespace kpmask::reference {

void gemm(int m, int n, int k, const double* a, int lda, const double* b, int ldb, double* c, int ldc);

Tensor conv2d_forward(const Tensor& input, const Tensor& weight, const Tensor* bias);
Tensor conv2d_backward_input(const Tensor& grad_out, const Tensor& weight, const Shape& input_shape);
Tensor conv2d_backward_weight(const Tensor& input, const Tensor& grad_out, int kernel);

Tensor avg_pool_forward(const Tensor& input, int factor);
Tensor max_pool2_forward(const Tensor& input, std::vector<std::size_t>& argmax);
Tensor upsample_nearest_forward(const Tensor& input, int factor);

Tensor batch_norm_train(const Tensor& input, const Tensor& gamma, const Tensor& beta, double eps,
                        kernels::BatchNormSaved& saved);
Tensor batch_norm_backward(const Tensor& grad_out, const Tensor& gamma, const kernels::BatchNormSaved& saved,
                           Tensor& grad_gamma, Tensor& grad_beta);

Tensor spatial_softmax_forward(const Tensor& logits, double temperature);
Tensor soft_argmax_forward(const Tensor& probs);
Tensor gaussians_forward(const Tensor& keypoints, double variance, int h, int w);

}  // namespace kpmask::reference
