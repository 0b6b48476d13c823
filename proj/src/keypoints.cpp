#include "kpmask/keypoints.hpp"

#include <fstream>
#include <memory>

#include <fmt/format.h>

#include "kpmask/checkpoint.hpp"
#include "kpmask/error.hpp"
#include "kpmask/kernels.hpp"
#include "kpmask/ops.hpp"

namespace kpmask {

Tensor KeypointSet::to_tensor() const {
    Tensor t(Shape{1, static_cast<int>(points.size()), 1, 2});
    for (std::size_t k = 0; k < points.size(); ++k) {
        t[2 * k] = points[k].x;
        t[2 * k + 1] = points[k].y;
    }
    return t;
}

KeypointSet KeypointSet::from_tensor(const Tensor& t, int sample) {
    const Shape& s = t.shape();
    if (s.h != 1 || s.w != 2) fail(ErrorCategory::ShapeMismatch, fmt::format("keypoint tensor must be Nx Kx1x2, got {}", s.str()));
    KeypointSet kps;
    kps.points.resize(s.c);
    const double* p = t.sample_ptr(sample);
    for (int k = 0; k < s.c; ++k) kps.points[k] = {p[2 * k], p[2 * k + 1]};
    return kps;
}

ProbabilityStack spatial_softmax(const HeatmapStack& stack, double temperature) {
    return {kernels::spatial_softmax_forward(stack.channels, temperature)};
}

KeypointSet extract_keypoints(const ProbabilityStack& probs) {
    return KeypointSet::from_tensor(kernels::soft_argmax_forward(probs.channels));
}

GaussianStack render_gaussians(const KeypointSet& kps, double variance, int grid_h, int grid_w) {
    return {kernels::gaussians_forward(kps.to_tensor(), variance, grid_h, grid_w), variance};
}

KeypointDetector::KeypointDetector(const DetectorConfig& config, std::uint64_t seed) : config_(config) {
    config_.validate();
    Rng rng(seed);
    hourglass_ = Hourglass(params_, "hourglass",
                           HourglassConfig{3, config.base_channels, config.depth, config.max_channels}, rng);
    // Per-channel biases would be invisible to both masks (softmax and min-max
    // are shift invariant), so the head has none.
    head_ = Conv2d(params_, "head", hourglass_.out_channels(), config.num_keypoints, 7, false, rng);
}

int KeypointDetector::grid_for(int input_side) const { return input_side / config_.scale_factor; }

Var KeypointDetector::forward(const Var& images, bool training) const {
    const Shape& s = images.shape();
    if (s.c != 3 || s.h % config_.scale_factor != 0 || s.w % config_.scale_factor != 0) {
        fail(ErrorCategory::ShapeMismatch,
             fmt::format("detector expects N x 3 x H x W with sides divisible by {}, got {}", config_.scale_factor,
                         s.str()));
    }
    Var small = ops::avg_pool(images, config_.scale_factor);
    return head_(hourglass_(small, training));
}

HeatmapStack KeypointDetector::predict_heatmaps(const Frame& frame) const {
    NoGradGuard guard;
    Var out = forward(Var(frame.pixels), false);
    return {out.value(), frame.height(), frame.width()};
}

KeypointSet KeypointDetector::keypoints(const Frame& frame) const {
    return extract_keypoints(spatial_softmax(predict_heatmaps(frame), config_.temperature));
}

void save_detector(const KeypointDetector& detector, int input_side, const std::filesystem::path& path) {
    CheckpointFile file;
    const DetectorConfig& c = detector.config();
    file.header.num_keypoints = static_cast<std::uint32_t>(c.num_keypoints);
    file.header.grid = static_cast<std::uint32_t>(detector.grid_for(input_side));
    file.header.temperature = c.temperature;
    file.header.variance = c.variance;
    KeyValueConfig kv;
    c.write(kv);
    kv.set("generator.input_side", std::to_string(input_side));
    file.config_text = kv.to_text();
    export_parameters(detector.params(), "detector.", file);
    write_checkpoint_file(path, file);
}

std::unique_ptr<KeypointDetector> load_pretrained(const std::filesystem::path& path, int expect_k) {
    const CheckpointFile file = read_checkpoint_file(path);
    DetectorConfig config;
    config.read(KeyValueConfig::parse(file.config_text));
    if (static_cast<int>(file.header.num_keypoints) != config.num_keypoints) {
        fail(ErrorCategory::UnsupportedCheckpoint,
             fmt::format("'{}': header K={} disagrees with its config K={}", path.string(), file.header.num_keypoints,
                         config.num_keypoints));
    }
    if (expect_k > 0 && config.num_keypoints != expect_k) {
        fail(ErrorCategory::ConfigMismatch,
             fmt::format("'{}' holds a K={} detector, expected K={}", path.string(), config.num_keypoints, expect_k));
    }
    config.temperature = file.header.temperature;
    config.variance = file.header.variance;
    auto detector = std::make_unique<KeypointDetector>(config, 0);
    import_parameters(detector->params(), "detector.", file);
    detector->set_frozen(true);
    return detector;
}

void write_keypoints_csv(const std::filesystem::path& path, const std::vector<KeypointSet>& per_frame) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out) fail(ErrorCategory::IoError, fmt::format("cannot write '{}'", path.string()));
    out << "frame,point_id,x,y\n";
    for (std::size_t f = 0; f < per_frame.size(); ++f)
        for (std::size_t k = 0; k < per_frame[f].size(); ++k)
            out << fmt::format("{},{},{:.9f},{:.9f}\n", f, k, per_frame[f].points[k].x, per_frame[f].points[k].y);
}

}  // namespace kpmask
