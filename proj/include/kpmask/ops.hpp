#pragma once

// Differentiable operations over Var. Forward passes dispatch to the parallel
// kernels; backward closures are recorded only when an input needs a gradient.

#include <span>

#include "kpmask/autograd.hpp"

namespace kpmask::ops {

Var conv2d(const Var& input, const Var& weight, const Var* bias);

struct BatchNormState {
    Tensor* running_mean;
    Tensor* running_var;
    double momentum = 0.1;
    double eps = 1e-5;
};
/// Training mode normalizes with batch statistics and updates the running
/// averages; evaluation mode uses the running averages.
Var batch_norm(const Var& input, const Var& gamma, const Var& beta, BatchNormState state, bool training);

Var relu(const Var& x);
Var sigmoid(const Var& x);
Var add(const Var& a, const Var& b);
Var scale(const Var& x, double factor);
/// Per-channel (x - shift[c]) * factor[c]; constants, no gradient to them.
Var channel_affine(const Var& x, std::span<const double> shift, std::span<const double> factor);

Var concat_channels(std::span<const Var> parts);
Var concat_batch(std::span<const Var> parts);
Var slice_batch(const Var& x, int begin, int end);

Var avg_pool(const Var& x, int factor);
Var max_pool2(const Var& x);
Var upsample_nearest(const Var& x, int factor);

Var spatial_softmax(const Var& logits, double temperature);
Var soft_argmax(const Var& probs);
Var render_gaussians(const Var& keypoints, double variance, int h, int w);
Var channel_sum(const Var& x);
/// Per-sample affine rescale to [0, 1]; a constant sample maps to zeros.
/// Values below `threshold` (after rescaling) are zeroed when threshold > 0.
Var minmax_normalize(const Var& x, double threshold = 0.0);
Var clamp01(const Var& x);

/// Mean of |a - b| over all elements, as a 1x1x1x1 scalar.
Var mean_abs_diff(const Var& a, const Var& b);
Var sum_scalars(std::span<const Var> terms);

}  // namespace kpmask::ops
