#pragma once

#include <optional>

#include "kpmask/motion.hpp"
#include "kpmask/trainer.hpp"

namespace kpmask {

struct AnimationJob {
    std::filesystem::path source_path;
    std::filesystem::path driving_path;
    std::filesystem::path checkpoint_path;
    TransferMode mode = TransferMode::Absolute;
    /// Defaults to the variant the checkpoint was trained with.
    std::optional<MaskVariant> mask_variant;
    std::filesystem::path output_dir;
    std::optional<double> fps;
    bool contact_sheet = false;
};

struct AnimationResult {
    FrameSequence frames;
    std::vector<std::filesystem::path> written;
};

/// Per-frame synthesis of a loaded model over preprocessed frames.
FrameSequence animate_frames(const Models& models, TransferMode mode, const Frame& source,
                             const FrameSequence& driving);

/// Loads everything named by the job, writes frame_%07d.png per driving
/// frame (plus contact_sheet.png when asked) and returns the frames.
AnimationResult animate(const AnimationJob& job);

/// Two-row sheet: source then driving frames on top, outputs below.
Tensor contact_sheet(const Frame& source, const FrameSequence& driving, const FrameSequence& outputs);

}  // namespace kpmask
