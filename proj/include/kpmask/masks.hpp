#pragma once

#include <filesystem>
#include <optional>

#include "kpmask/config.hpp"
#include "kpmask/keypoints.hpp"

namespace kpmask {

/// Single-channel geometry map fed to the generator, 1 x 1 x h x w in [0, 1].
struct StructuralMask {
    Tensor map;
    MaskVariant variant = MaskVariant::Heatmap;
    std::optional<KeypointSet> origin_kps;  // circles only
    bool degenerate = false;                // constant heatmap sum
};

/// Sum of the raw channels, min-max rescaled to [0, 1] per image.
StructuralMask heatmap_mask(const HeatmapStack& stack, double threshold = 0.0);
/// Sum of unnormalized keypoint Gaussians, clipped to [0, 1].
StructuralMask circles_mask(const KeypointSet& kps, double variance, int grid_h, int grid_w);

// Batched, differentiable forms. The single-image functions above route
// through these, so both paths produce identical bits.
Var heatmap_masks(const Var& heatmaps, double threshold);
Var circles_masks_from_keypoints(const Var& keypoints, double variance, int grid_h, int grid_w);
/// N x K x h x w raw heatmaps -> N x 1 x h x w masks of the configured variant.
Var build_masks(const Var& heatmaps, const DetectorConfig& detector, const MaskConfig& mask);

void write_mask_png(const std::filesystem::path& path, const StructuralMask& mask);

}  // namespace kpmask
