#pragma once

#include <array>
#include <filesystem>
#include <vector>

#include "kpmask/config.hpp"
#include "kpmask/image.hpp"
#include "kpmask/nn.hpp"

namespace kpmask {

/// K raw (pre-softmax) detector channels, stored 1 x K x h x w.
struct HeatmapStack {
    Tensor channels;
    int source_height = 0;
    int source_width = 0;

    int num_keypoints() const { return channels.shape().c; }
};

/// Per-channel spatial distributions, 1 x K x h x w, each summing to 1.
struct ProbabilityStack {
    Tensor channels;
};

struct Keypoint {
    double x = 0.0;
    double y = 0.0;
    bool operator==(const Keypoint&) const = default;
};

/// K points in normalized [-1, 1] coordinates (x rightward, y downward).
struct KeypointSet {
    std::vector<Keypoint> points;

    std::size_t size() const { return points.size(); }
    bool operator==(const KeypointSet&) const = default;

    /// 1 x K x 1 x 2 tensor form used by the kernels.
    Tensor to_tensor() const;
    static KeypointSet from_tensor(const Tensor& t, int sample = 0);
};

struct GaussianStack {
    Tensor channels;
    double variance = 0.0;
};

ProbabilityStack spatial_softmax(const HeatmapStack& stack, double temperature);
KeypointSet extract_keypoints(const ProbabilityStack& probs);
GaussianStack render_gaussians(const KeypointSet& kps, double variance, int grid_h, int grid_w);

/// Hourglass keypoint detector: area-downscale by scale_factor, hourglass,
/// then a 7x7 convolution to K raw heatmap channels.
class KeypointDetector {
public:
    KeypointDetector(const DetectorConfig& config, std::uint64_t seed);

    KeypointDetector(const KeypointDetector&) = delete;
    KeypointDetector& operator=(const KeypointDetector&) = delete;

    /// Batched raw heatmaps, N x K x (side / scale) x (side / scale).
    Var forward(const Var& images, bool training) const;

    /// Inference on one preprocessed frame with running batch-norm statistics.
    HeatmapStack predict_heatmaps(const Frame& frame) const;
    KeypointSet keypoints(const Frame& frame) const;

    int grid_for(int input_side) const;
    const DetectorConfig& config() const { return config_; }
    ParameterSet& params() { return params_; }
    const ParameterSet& params() const { return params_; }

    /// Frozen detectors take no gradient updates; inputs still get gradients.
    void set_frozen(bool frozen) { params_.set_trainable(!frozen); }
    bool frozen() const { return !params_.trainable(); }

private:
    DetectorConfig config_;
    ParameterSet params_;
    Hourglass hourglass_;
    Conv2d head_;
};

/// Writes a detector-only checkpoint (header carries K, grid and the
/// softmax/Gaussian settings).
void save_detector(const KeypointDetector& detector, int input_side, const std::filesystem::path& path);

/// Loads a detector from a detector-only or full training checkpoint.
/// expect_k mismatch -> ConfigMismatch (expect_k <= 0 accepts any K); bad
/// file -> UnsupportedCheckpoint.
/// The returned detector is frozen.
std::unique_ptr<KeypointDetector> load_pretrained(const std::filesystem::path& path, int expect_k);

void write_keypoints_csv(const std::filesystem::path& path, const std::vector<KeypointSet>& per_frame);

}  // namespace kpmask
