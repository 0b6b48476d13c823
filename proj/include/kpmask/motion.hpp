#pragma once

#include "kpmask/masks.hpp"

namespace kpmask {

/// Source keypoints moved by the driving displacement since its first frame,
/// clamped to [-1, 1]. K mismatch -> ConfigMismatch.
KeypointSet relative_keypoints(const KeypointSet& source, const KeypointSet& driving_t,
                               const KeypointSet& driving_first);

/// Mask of one frame under the configured variant.
StructuralMask frame_mask(const KeypointDetector& detector, const Frame& frame, const MaskConfig& mask);

/// Relative mode requires the circles variant (IncompatibleMode otherwise).
void check_mode(TransferMode mode, MaskVariant variant);

StructuralMask driving_mask(TransferMode mode, const Frame& source, const Frame& driving_t, const Frame& driving_first,
                            const KeypointDetector& detector, const MaskConfig& mask);

/// Per-run helper: source and first-driving keypoints are detected once.
class MotionTransfer {
public:
    MotionTransfer(TransferMode mode, const KeypointDetector& detector, const MaskConfig& mask, const Frame& source,
                   const Frame& driving_first);

    StructuralMask source_mask() const { return source_mask_; }
    StructuralMask driving_mask(const Frame& driving_t) const;
    const KeypointSet& source_keypoints() const { return source_kps_; }

private:
    TransferMode mode_;
    const KeypointDetector& detector_;
    MaskConfig mask_;
    KeypointSet source_kps_;
    KeypointSet first_kps_;
    StructuralMask source_mask_;
    int grid_ = 0;
};

}  // namespace kpmask
