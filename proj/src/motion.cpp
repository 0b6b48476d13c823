#include "kpmask/motion.hpp"

#include <algorithm>

#include <fmt/format.h>

#include "kpmask/error.hpp"

namespace kpmask {

KeypointSet relative_keypoints(const KeypointSet& source, const KeypointSet& driving_t,
                               const KeypointSet& driving_first) {
    if (source.size() != driving_t.size() || source.size() != driving_first.size()) {
        fail(ErrorCategory::ConfigMismatch, fmt::format("keypoint counts differ: source {}, driving {}, first {}",
                                                        source.size(), driving_t.size(), driving_first.size()));
    }
    KeypointSet out;
    out.points.resize(source.size());
    for (std::size_t k = 0; k < source.size(); ++k) {
        out.points[k].x = std::clamp(source.points[k].x + (driving_t.points[k].x - driving_first.points[k].x), -1.0, 1.0);
        out.points[k].y = std::clamp(source.points[k].y + (driving_t.points[k].y - driving_first.points[k].y), -1.0, 1.0);
    }
    return out;
}

void check_mode(TransferMode mode, MaskVariant variant) {
    if (mode == TransferMode::Relative && variant != MaskVariant::Circles) {
        fail(ErrorCategory::IncompatibleMode, "relative transfer needs the circles mask; the heatmap mask is absolute only");
    }
}

StructuralMask frame_mask(const KeypointDetector& detector, const Frame& frame, const MaskConfig& mask) {
    const HeatmapStack stack = detector.predict_heatmaps(frame);
    if (mask.variant == MaskVariant::Heatmap) return heatmap_mask(stack, mask.threshold);
    const DetectorConfig& c = detector.config();
    const KeypointSet kps = extract_keypoints(spatial_softmax(stack, c.temperature));
    const Shape& s = stack.channels.shape();
    return circles_mask(kps, c.variance, s.h, s.w);
}

StructuralMask driving_mask(TransferMode mode, const Frame& source, const Frame& driving_t, const Frame& driving_first,
                            const KeypointDetector& detector, const MaskConfig& mask) {
    check_mode(mode, mask.variant);
    if (mode == TransferMode::Absolute) return frame_mask(detector, driving_t, mask);
    const KeypointSet moved =
        relative_keypoints(detector.keypoints(source), detector.keypoints(driving_t), detector.keypoints(driving_first));
    const int grid = detector.grid_for(source.height());
    return circles_mask(moved, detector.config().variance, grid, grid);
}

MotionTransfer::MotionTransfer(TransferMode mode, const KeypointDetector& detector, const MaskConfig& mask,
                               const Frame& source, const Frame& driving_first)
    : mode_(mode), detector_(detector), mask_(mask) {
    check_mode(mode, mask.variant);
    source_mask_ = frame_mask(detector, source, mask);
    grid_ = detector.grid_for(source.height());
    if (mode == TransferMode::Relative) {
        source_kps_ = detector.keypoints(source);
        first_kps_ = detector.keypoints(driving_first);
    }
}

StructuralMask MotionTransfer::driving_mask(const Frame& driving_t) const {
    if (mode_ == TransferMode::Absolute) return frame_mask(detector_, driving_t, mask_);
    const KeypointSet moved = relative_keypoints(source_kps_, detector_.keypoints(driving_t), first_kps_);
    return circles_mask(moved, detector_.config().variance, grid_, grid_);
}

}  // namespace kpmask
