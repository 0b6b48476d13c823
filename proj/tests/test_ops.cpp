#include <array>

#include <gtest/gtest.h>

#include "kpmask/ops.hpp"
#include "support.hpp"

using namespace kpmask;
using kpmask::testing::check_gradients;
using kpmask::testing::random_tensor;

namespace {

// Weighted sum with fixed random weights turns any output into a scalar
// whose gradient exercises every element.
Var weighted(const Var& y, std::uint64_t seed) {
    Rng rng(seed);
    const Var w(random_tensor(y.shape(), rng));
    Tensor prod(y.shape());
    for (std::size_t i = 0; i < prod.size(); ++i) prod[i] = y.value()[i] * w.value()[i];
    return Var::make(Tensor::scalar(prod.sum()), {y}, [w](Node& n) {
        Tensor g(n.inputs[0]->value.shape());
        for (std::size_t i = 0; i < g.size(); ++i) g[i] = n.grad[0] * w.value()[i];
        n.inputs[0]->accumulate(g);
    });
}

}  // namespace

TEST(Ops, ConvolutionGradients) {
    Rng rng(10);
    Var x(random_tensor(Shape{2, 3, 6, 6}, rng), true);
    Var w(random_tensor(Shape{4, 3, 3, 3}, rng), true);
    Var b(random_tensor(Shape{4, 1, 1, 1}, rng), true);
    const auto r = check_gradients([&] { return weighted(ops::conv2d(x, w, &b), 1); }, {x, w, b}, 40, 2);
    EXPECT_LT(r.rel_error, 1e-7);
}

TEST(Ops, BatchNormGradients) {
    Rng rng(11);
    Var x(random_tensor(Shape{3, 2, 4, 4}, rng), true);
    Var g(random_tensor(Shape{2, 1, 1, 1}, rng, 0.5, 1.5), true);
    Var b(random_tensor(Shape{2, 1, 1, 1}, rng), true);
    Tensor rm(Shape{2, 1, 1, 1}), rv(Shape{2, 1, 1, 1}, 1.0);
    const auto r = check_gradients(
        [&] { return weighted(ops::batch_norm(x, g, b, {&rm, &rv}, true), 3); }, {x, g, b}, 40, 4);
    EXPECT_LT(r.rel_error, 1e-6);
}

TEST(Ops, BatchNormRunningStatistics) {
    Tensor x(Shape{2, 1, 1, 2}, std::vector<double>{1, 2, 3, 6});
    Tensor rm(Shape{1, 1, 1, 1}), rv(Shape{1, 1, 1, 1}, 1.0);
    ops::batch_norm(Var(x), Var(Tensor(Shape{1, 1, 1, 1}, 1.0)), Var(Tensor(Shape{1, 1, 1, 1})), {&rm, &rv}, true);
    // mean 3, unbiased variance (4 + 1 + 0 + 9) / 3
    EXPECT_NEAR(rm[0], 0.1 * 3.0, 1e-15);
    EXPECT_NEAR(rv[0], 0.9 + 0.1 * 14.0 / 3.0, 1e-15);
}

TEST(Ops, ElementwiseAndShapeGradients) {
    Rng rng(12);
    Var a(random_tensor(Shape{2, 2, 4, 4}, rng), true);
    Var c(random_tensor(Shape{2, 1, 4, 4}, rng), true);
    const auto r = check_gradients(
        [&] {
            const std::array<Var, 2> parts{ops::sigmoid(a), ops::relu(ops::scale(c, 1.7))};
            Var cat = ops::concat_channels(parts);
            Var pooled = ops::upsample_nearest(ops::avg_pool(cat, 2), 2);
            Var sliced = ops::slice_batch(ops::add(pooled, cat), 1, 2);
            const std::array<Var, 2> both{sliced, ops::max_pool2(ops::upsample_nearest(sliced, 2))};
            return weighted(ops::concat_batch(both), 5);
        },
        {a, c}, 64, 6);
    EXPECT_LT(r.rel_error, 1e-7);
}

TEST(Ops, KeypointChainGradients) {
    Rng rng(13);
    Var logits(random_tensor(Shape{2, 3, 6, 6}, rng, -2, 2), true);
    const auto r = check_gradients(
        [&] {
            Var kp = ops::soft_argmax(ops::spatial_softmax(logits, 0.3));
            return weighted(ops::channel_sum(ops::render_gaussians(kp, 0.05, 6, 6)), 7);
        },
        {logits}, 72, 8);
    EXPECT_LT(r.rel_error, 1e-6);
}

TEST(Ops, MinMaxAndClampGradients) {
    Rng rng(14);
    Var x(random_tensor(Shape{2, 1, 5, 5}, rng), true);
    auto r = check_gradients([&] { return weighted(ops::minmax_normalize(x), 9); }, {x}, 50, 10);
    EXPECT_LT(r.rel_error, 1e-6);
    Var y(random_tensor(Shape{1, 1, 6, 6}, rng, -0.5, 1.5), true);
    r = check_gradients([&] { return weighted(ops::clamp01(y), 11); }, {y}, 36, 12);
    EXPECT_LT(r.rel_error, 1e-6);
}

TEST(Ops, MeanAbsDiffGradient) {
    Rng rng(15);
    Var a(random_tensor(Shape{1, 2, 3, 3}, rng), true);
    Var b(random_tensor(Shape{1, 2, 3, 3}, rng), true);
    const auto r = check_gradients([&] { return ops::mean_abs_diff(a, b); }, {a, b}, 18, 16);
    EXPECT_LT(r.rel_error, 1e-7);
}

TEST(Ops, MinMaxOfConstantIsZero) {
    const Var y = ops::minmax_normalize(Var(Tensor(Shape{1, 1, 3, 3}, 4.0)));
    for (double v : y.value().values()) EXPECT_EQ(v, 0.0);
}

TEST(Autograd, NoGradGuardSkipsRecording) {
    Var x(Tensor(Shape{1, 1, 2, 2}, 1.0), true);
    {
        NoGradGuard guard;
        EXPECT_FALSE(ops::relu(x).requires_grad());
    }
    EXPECT_TRUE(ops::relu(x).requires_grad());
}

TEST(Autograd, SharedInputAccumulates) {
    Var x(Tensor(Shape{1, 1, 1, 1}, 2.0), true);
    backward(ops::add(ops::scale(x, 3.0), ops::scale(x, 4.0)));
    EXPECT_DOUBLE_EQ(x.grad()[0], 7.0);
}
