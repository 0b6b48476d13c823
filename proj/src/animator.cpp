#include "kpmask/animator.hpp"

#include <exception>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "kpmask/error.hpp"

namespace kpmask {

namespace fs = std::filesystem;

FrameSequence animate_frames(const Models& models, TransferMode mode, const Frame& source,
                             const FrameSequence& driving) {
    if (driving.empty()) fail(ErrorCategory::EmptyVideo, "driving video has no frames");
    const MotionTransfer motion(mode, *models.detector, models.config.mask, source, driving.front());
    const StructuralMask source_mask = motion.source_mask();
    FrameSequence out(driving.size());
    std::exception_ptr error;
    const auto count = static_cast<long>(driving.size());
    // Frames are independent; results land in their own slots so order is kept.
#pragma omp parallel for schedule(dynamic)
    for (long t = 0; t < count; ++t) {
        try {
            Frame f = models.generator->synthesize(source, source_mask, motion.driving_mask(driving[t]));
            f.index = static_cast<int>(t);
            out[t] = std::move(f);
        } catch (...) {
#pragma omp critical
            if (!error) error = std::current_exception();
        }
    }
    if (error) std::rethrow_exception(error);
    return out;
}

Tensor contact_sheet(const Frame& source, const FrameSequence& driving, const FrameSequence& outputs) {
    const int side = source.height();
    const int cols = static_cast<int>(driving.size()) + 1;
    Tensor sheet(Shape{1, 3, 2 * side, cols * side}, 1.0);
    auto paste = [&](const Tensor& img, int row, int col) {
        for (int c = 0; c < 3; ++c)
            for (int y = 0; y < side; ++y)
                for (int x = 0; x < side; ++x) sheet.at(0, c, row * side + y, col * side + x) = img.at(0, c, y, x);
    };
    paste(source.pixels, 0, 0);
    for (std::size_t t = 0; t < driving.size(); ++t) paste(driving[t].pixels, 0, static_cast<int>(t) + 1);
    for (std::size_t t = 0; t < outputs.size(); ++t) paste(outputs[t].pixels, 1, static_cast<int>(t) + 1);
    return sheet;
}

AnimationResult animate(const AnimationJob& job) {
    Models models = load_models(job.checkpoint_path);
    const MaskVariant trained = models.config.mask.variant;
    const MaskVariant variant = job.mask_variant.value_or(trained);
    check_mode(job.mode, variant);
    if (variant != trained) {
        fail(ErrorCategory::IncompatibleMode,
             fmt::format("checkpoint was trained with the {} mask, job asks for {}", to_string(trained),
                         to_string(variant)));
    }
    const int side = models.config.generator.input_side;
    const FrameSequence source_frames = load_video(job.source_path);
    const Frame source = preprocess(source_frames.front(), side);
    FrameSequence driving = load_video(job.driving_path);
    for (Frame& f : driving) f = preprocess(f, side);

    AnimationResult result;
    result.frames = animate_frames(models, job.mode, source, driving);
    fs::create_directories(job.output_dir);
    for (std::size_t t = 0; t < result.frames.size(); ++t) {
        const fs::path p = job.output_dir / fmt::format("frame_{:07d}.png", t);
        write_png(p, result.frames[t].pixels);
        result.written.push_back(p);
    }
    if (job.contact_sheet) {
        const fs::path p = job.output_dir / "contact_sheet.png";
        write_png(p, contact_sheet(source, driving, result.frames));
        result.written.push_back(p);
    }
    if (job.fps) {
        spdlog::info("encode with: ffmpeg -framerate {} -i {}/frame_%07d.png out.mp4", *job.fps, job.output_dir.string());
    }
    return result;
}

}  // namespace kpmask
