#include <gtest/gtest.h>

#include "kpmask/kernels.hpp"
#include "kpmask/masks.hpp"
#include "kpmask/motion.hpp"
#include "support.hpp"

using namespace kpmask;
using kpmask::testing::random_tensor;

namespace {

HeatmapStack stack_of(Tensor t) { return {std::move(t), 0, 0}; }

int local_maxima(const Tensor& map) {
    const int h = map.shape().h, w = map.shape().w;
    int count = 0;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const double v = map.at(0, 0, y, x);
            bool peak = v > 0.5;
            for (int dy = -1; dy <= 1 && peak; ++dy)
                for (int dx = -1; dx <= 1; ++dx) {
                    if (dx == 0 && dy == 0) continue;
                    const int yy = y + dy, xx = x + dx;
                    if (yy < 0 || yy >= h || xx < 0 || xx >= w) continue;
                    if (map.at(0, 0, yy, xx) >= v) peak = false;
                }
            count += peak;
        }
    return count;
}

}  // namespace

TEST(HeatmapMask, ZerosAreDegenerate) {
    const StructuralMask m = heatmap_mask(stack_of(Tensor(Shape{1, 3, 4, 4})));
    EXPECT_TRUE(m.degenerate);
    EXPECT_EQ(m.map.max(), 0.0);
    EXPECT_EQ(m.map.shape(), (Shape{1, 1, 4, 4}));
}

TEST(HeatmapMask, HandComputedRescale) {
    // channel sums: {1, 3, 5, 9} -> (s - 1) / 8
    Tensor t(Shape{1, 2, 2, 2}, std::vector<double>{0, 1, 2, 4, 1, 2, 3, 5});
    const StructuralMask m = heatmap_mask(stack_of(t));
    EXPECT_FALSE(m.degenerate);
    EXPECT_DOUBLE_EQ(m.map[0], 0.0);
    EXPECT_DOUBLE_EQ(m.map[1], 0.25);
    EXPECT_DOUBLE_EQ(m.map[2], 0.5);
    EXPECT_DOUBLE_EQ(m.map[3], 1.0);
}

TEST(HeatmapMask, RangeAndAffineInvariance) {
    Rng rng(1);
    for (int trial = 0; trial < 20; ++trial) {
        Tensor t = random_tensor(Shape{1, 4, 8, 8}, rng, -3, 3);
        const StructuralMask m = heatmap_mask(stack_of(t));
        EXPECT_EQ(m.map.min(), 0.0);
        EXPECT_EQ(m.map.max(), 1.0);
        const double a = rng.uniform(0.1, 5.0), b = rng.uniform(-4, 4);
        Tensor u = t;
        for (double& v : u.values()) v = a * v + b;
        EXPECT_LT(max_abs_diff(heatmap_mask(stack_of(u)).map, m.map), 1e-12);
    }
}

TEST(HeatmapMask, ThresholdHook) {
    Tensor t(Shape{1, 1, 1, 4}, std::vector<double>{0, 1, 2, 4});
    const StructuralMask m = heatmap_mask(stack_of(t), 0.3);
    EXPECT_EQ(m.map[1], 0.0);
    EXPECT_DOUBLE_EQ(m.map[2], 0.5);
}

TEST(CirclesMask, SinglePeakAndClipping) {
    const double x = kernels::cell_center(4, 10), y = kernels::cell_center(6, 10);
    const StructuralMask one = circles_mask({{{x, y}}}, 0.01, 10, 10);
    EXPECT_EQ(one.variant, MaskVariant::Circles);
    ASSERT_TRUE(one.origin_kps.has_value());
    EXPECT_EQ(one.map.at(0, 0, 6, 4), 1.0);
    const StructuralMask two = circles_mask({{{x, y}, {x, y}}}, 0.01, 10, 10);
    EXPECT_EQ(two.map.at(0, 0, 6, 4), 1.0);
    EXPECT_EQ(two.map.max(), 1.0);
    EXPECT_GE(two.map.min(), 0.0);
}

TEST(CirclesMask, ThreeSeparatedPeaks) {
    const int g = 16;
    const KeypointSet kps{{{kernels::cell_center(3, g), kernels::cell_center(3, g)},
                           {kernels::cell_center(12, g), kernels::cell_center(4, g)},
                           {kernels::cell_center(7, g), kernels::cell_center(12, g)}}};
    const StructuralMask m = circles_mask(kps, 0.005, g, g);
    EXPECT_EQ(local_maxima(m.map), 3);
    EXPECT_EQ(m.map.at(0, 0, 3, 3), 1.0);
    EXPECT_EQ(m.map.at(0, 0, 4, 12), 1.0);
    EXPECT_EQ(m.map.at(0, 0, 12, 7), 1.0);
}

TEST(CirclesMask, ReconstructibleFromKeypoints) {
    Rng rng(2);
    const KeypointSet kps{{{rng.uniform(-1, 1), rng.uniform(-1, 1)}, {rng.uniform(-1, 1), rng.uniform(-1, 1)}}};
    const StructuralMask m = circles_mask(kps, 0.02, 12, 12);
    EXPECT_EQ(circles_mask(*m.origin_kps, 0.02, 12, 12).map, m.map);
}

TEST(BuildMasks, BatchedMatchesSingle) {
    Rng rng(3);
    const Tensor logits = random_tensor(Shape{2, 3, 8, 8}, rng, -2, 2);
    DetectorConfig d;
    MaskConfig heat{MaskVariant::Heatmap, 0.0};
    MaskConfig circ{MaskVariant::Circles, 0.0};
    const Tensor hb = build_masks(Var(logits), d, heat).value();
    const Tensor cb = build_masks(Var(logits), d, circ).value();
    for (int n = 0; n < 2; ++n) {
        const HeatmapStack s = stack_of(logits.slice_batch(n, n + 1));
        EXPECT_EQ(hb.slice_batch(n, n + 1), heatmap_mask(s).map);
        const KeypointSet k = extract_keypoints(spatial_softmax(s, d.temperature));
        EXPECT_EQ(cb.slice_batch(n, n + 1), circles_mask(k, d.variance, 8, 8).map);
    }
}
