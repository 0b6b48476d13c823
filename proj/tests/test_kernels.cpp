#include <gtest/gtest.h>

#include "kpmask/kernels.hpp"
#include "kpmask/reference.hpp"
#include "support.hpp"

using namespace kpmask;
using kpmask::testing::random_tensor;

TEST(Kernels, GemmMatchesReference) {
    Rng rng(1);
    for (auto [m, n, k] : {std::tuple{1, 1, 1}, {5, 17, 3}, {33, 70, 300}, {4, 16, 256}, {9, 1, 13}}) {
        const Tensor a = random_tensor(Shape{1, 1, m, k}, rng);
        const Tensor b = random_tensor(Shape{1, 1, k, n}, rng);
        Tensor c1 = random_tensor(Shape{1, 1, m, n}, rng);
        Tensor c2 = c1;
        kernels::gemm(m, n, k, a.data(), k, b.data(), n, c1.data(), n);
        reference::gemm(m, n, k, a.data(), k, b.data(), n, c2.data(), n);
        EXPECT_LT(max_abs_diff(c1, c2), 1e-11) << m << "x" << n << "x" << k;
    }
}

TEST(Kernels, ConvolutionMatchesReference) {
    Rng rng(2);
    for (auto [n, cin, cout, side, k] : {std::tuple{1, 3, 4, 8, 3}, {2, 5, 3, 9, 7}, {3, 2, 6, 5, 1}, {1, 1, 1, 4, 3}}) {
        const Tensor x = random_tensor(Shape{n, cin, side, side}, rng);
        const Tensor w = random_tensor(Shape{cout, cin, k, k}, rng);
        const Tensor b = random_tensor(Shape{1, cout, 1, 1}, rng);
        const Tensor y = kernels::conv2d_forward(x, w, &b);
        EXPECT_LT(max_abs_diff(y, reference::conv2d_forward(x, w, &b)), 1e-11);
        const Tensor g = random_tensor(y.shape(), rng);
        EXPECT_LT(max_abs_diff(kernels::conv2d_backward_input(g, w, x.shape()),
                               reference::conv2d_backward_input(g, w, x.shape())),
                  1e-11);
        EXPECT_LT(max_abs_diff(kernels::conv2d_backward_weight(x, g, k), reference::conv2d_backward_weight(x, g, k)),
                  1e-10);
    }
}

TEST(Kernels, PoolingAndUpsamplingMatchReference) {
    Rng rng(3);
    const Tensor x = random_tensor(Shape{2, 3, 8, 8}, rng);
    EXPECT_EQ(kernels::avg_pool_forward(x, 2), reference::avg_pool_forward(x, 2));
    EXPECT_EQ(kernels::avg_pool_forward(x, 4), reference::avg_pool_forward(x, 4));
    std::vector<std::size_t> a1, a2;
    EXPECT_EQ(kernels::max_pool2_forward(x, a1), reference::max_pool2_forward(x, a2));
    EXPECT_EQ(a1, a2);
    EXPECT_EQ(kernels::upsample_nearest_forward(x, 2), reference::upsample_nearest_forward(x, 2));
}

TEST(Kernels, AvgPoolOfConstantIsConstant) {
    Tensor x(Shape{1, 2, 8, 8}, 0.25);
    const Tensor y = kernels::avg_pool_forward(x, 4);
    EXPECT_EQ(y.shape(), (Shape{1, 2, 2, 2}));
    for (double v : y.values()) EXPECT_DOUBLE_EQ(v, 0.25);
}

TEST(Kernels, BatchNormMatchesReference) {
    Rng rng(4);
    const Tensor x = random_tensor(Shape{3, 4, 5, 5}, rng);
    const Tensor gamma = random_tensor(Shape{4, 1, 1, 1}, rng);
    const Tensor beta = random_tensor(Shape{4, 1, 1, 1}, rng);
    kernels::BatchNormSaved s1, s2;
    const Tensor y1 = kernels::batch_norm_train(x, gamma, beta, 1e-5, s1);
    const Tensor y2 = reference::batch_norm_train(x, gamma, beta, 1e-5, s2);
    EXPECT_LT(max_abs_diff(y1, y2), 1e-12);
    const Tensor g = random_tensor(y1.shape(), rng);
    Tensor gg1(gamma.shape()), gb1(gamma.shape()), gg2(gamma.shape()), gb2(gamma.shape());
    const Tensor dx1 = kernels::batch_norm_backward(g, gamma, s1, gg1, gb1);
    const Tensor dx2 = reference::batch_norm_backward(g, gamma, s2, gg2, gb2);
    EXPECT_LT(max_abs_diff(dx1, dx2), 1e-11);
    EXPECT_LT(max_abs_diff(gg1, gg2), 1e-11);
    EXPECT_LT(max_abs_diff(gb1, gb2), 1e-11);
}

TEST(Kernels, KeypointKernelsMatchReference) {
    Rng rng(5);
    const Tensor logits = random_tensor(Shape{2, 3, 7, 9}, rng, -3, 3);
    const Tensor p = kernels::spatial_softmax_forward(logits, 0.1);
    EXPECT_LT(max_abs_diff(p, reference::spatial_softmax_forward(logits, 0.1)), 1e-14);
    const Tensor kp = kernels::soft_argmax_forward(p);
    EXPECT_LT(max_abs_diff(kp, reference::soft_argmax_forward(p)), 1e-14);
    EXPECT_LT(max_abs_diff(kernels::gaussians_forward(kp, 0.01, 7, 9), reference::gaussians_forward(kp, 0.01, 7, 9)),
              1e-14);
}

TEST(Kernels, GuardsRejectBadParameters) {
    const Tensor logits(Shape{1, 1, 4, 4});
    EXPECT_THROW(kernels::spatial_softmax_forward(logits, 0.0), Error);
    EXPECT_THROW(kernels::gaussians_forward(Tensor(Shape{1, 1, 1, 2}), -1.0, 4, 4), Error);
    try {
        kernels::spatial_softmax_forward(logits, -0.5);
    } catch (const Error& e) {
        EXPECT_EQ(e.category(), ErrorCategory::InvalidTemperature);
    }
}
