#include "kpmask/masks.hpp"

#include "kpmask/ops.hpp"

namespace kpmask {

Var heatmap_masks(const Var& heatmaps, double threshold) {
    return ops::minmax_normalize(ops::channel_sum(heatmaps), threshold);
}

Var circles_masks_from_keypoints(const Var& keypoints, double variance, int grid_h, int grid_w) {
    return ops::clamp01(ops::channel_sum(ops::render_gaussians(keypoints, variance, grid_h, grid_w)));
}

Var build_masks(const Var& heatmaps, const DetectorConfig& detector, const MaskConfig& mask) {
    if (mask.variant == MaskVariant::Heatmap) return heatmap_masks(heatmaps, mask.threshold);
    const Var kps = ops::soft_argmax(ops::spatial_softmax(heatmaps, detector.temperature));
    return circles_masks_from_keypoints(kps, detector.variance, heatmaps.shape().h, heatmaps.shape().w);
}

StructuralMask heatmap_mask(const HeatmapStack& stack, double threshold) {
    NoGradGuard guard;
    Var map = heatmap_masks(Var(stack.channels), threshold);
    const Tensor sum = ops::channel_sum(Var(stack.channels)).value();
    return {map.value(), MaskVariant::Heatmap, std::nullopt, !(sum.max() > sum.min())};
}

StructuralMask circles_mask(const KeypointSet& kps, double variance, int grid_h, int grid_w) {
    NoGradGuard guard;
    Var map = circles_masks_from_keypoints(Var(kps.to_tensor()), variance, grid_h, grid_w);
    return {map.value(), MaskVariant::Circles, kps, false};
}

void write_mask_png(const std::filesystem::path& path, const StructuralMask& mask) { write_png(path, mask.map); }

}  // namespace kpmask
