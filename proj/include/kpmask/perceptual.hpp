#pragma once

#include <memory>

#include "kpmask/config.hpp"
#include "kpmask/image.hpp"
#include "kpmask/nn.hpp"

namespace kpmask {

/// One feature map per tapped layer, each 1 x C_i x h_i x w_i.
struct FeaturePyramid {
    std::vector<Tensor> levels;
};

/// Frozen VGG-style feature extractor. Stages are runs of conv3x3 + ReLU
/// separated by 2x2 max pooling; the first activation of every stage is
/// tapped. Inputs in [0, 1] are normalized with ImageNet statistics.
class FeatureExtractor {
public:
    explicit FeatureExtractor(const ExtractorConfig& config);

    FeatureExtractor(const FeatureExtractor&) = delete;
    FeatureExtractor& operator=(const FeatureExtractor&) = delete;

    /// Tapped activations; gradients reach `images` but never the weights.
    std::vector<Var> features(const Var& images) const;
    FeaturePyramid feature_maps(const Frame& frame) const;

    const ExtractorConfig& config() const { return config_; }
    ParameterSet& params() { return params_; }
    std::size_t num_levels() const { return config_.stage_channels.size(); }

private:
    ExtractorConfig config_;
    ParameterSet params_;
    std::vector<std::vector<Conv2d>> stages_;
};

/// Weights file when present; with allow_untrained a missing file falls back
/// to the miniature extractor (logged as a warning), otherwise NotFound.
std::unique_ptr<FeatureExtractor> load_extractor(const ExtractorConfig& config);

/// Sum over tapped layers of the mean |N_i(a) - N_i(b)|.
Var reconstruction_loss(const Var& pred, const Var& target, const FeatureExtractor& extractor);
/// Equal-weight sum of reconstruction_loss over the configured scales that
/// are <= the input side and divide it; area-averaged downsampling.
Var pyramid_loss(const Var& pred, const Var& target, const FeatureExtractor& extractor);

double reconstruction_loss(const Frame& pred, const Frame& target, const FeatureExtractor& extractor);
double pyramid_loss(const Frame& pred, const Frame& target, const FeatureExtractor& extractor);

/// Scales actually used for a given side (ConfigMismatch when none fit).
std::vector<int> pyramid_scales_for(const ExtractorConfig& config, int side);

}  // namespace kpmask
