#include "kpmask/perceptual.hpp"

#include <array>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "kpmask/checkpoint.hpp"
#include "kpmask/error.hpp"
#include "kpmask/ops.hpp"

namespace kpmask {

namespace {

constexpr std::array<double, 3> kImagenetMean{0.485, 0.456, 0.406};
constexpr std::array<double, 3> kImagenetInvStd{1.0 / 0.229, 1.0 / 0.224, 1.0 / 0.225};

}  // namespace

FeatureExtractor::FeatureExtractor(const ExtractorConfig& config) : config_(config) {
    if (config_.stage_channels.empty() || config_.stage_channels.size() != config_.stage_convs.size()) {
        fail(ErrorCategory::ConfigMismatch, "extractor stage_channels and stage_convs must be non-empty and equal length");
    }
    Rng rng(config_.seed);
    int in = 3;
    for (std::size_t s = 0; s < config_.stage_channels.size(); ++s) {
        std::vector<Conv2d> convs;
        for (int i = 0; i < config_.stage_convs[s]; ++i) {
            convs.emplace_back(params_, fmt::format("stage{}.conv{}", s, i), in, config_.stage_channels[s], 3, true, rng);
            in = config_.stage_channels[s];
        }
        stages_.push_back(std::move(convs));
    }
    params_.set_trainable(false);
}

std::vector<Var> FeatureExtractor::features(const Var& images) const {
    if (images.shape().c != 3) {
        fail(ErrorCategory::ShapeMismatch, fmt::format("extractor expects RGB input, got {}", images.shape().str()));
    }
    std::vector<Var> taps;
    Var h = ops::channel_affine(images, kImagenetMean, kImagenetInvStd);
    for (std::size_t s = 0; s < stages_.size(); ++s) {
        if (s > 0) h = ops::max_pool2(h);
        for (std::size_t i = 0; i < stages_[s].size(); ++i) {
            h = ops::relu(stages_[s][i](h));
            if (i == 0) taps.push_back(h);
        }
    }
    return taps;
}

FeaturePyramid FeatureExtractor::feature_maps(const Frame& frame) const {
    NoGradGuard guard;
    FeaturePyramid out;
    for (const Var& v : features(Var(frame.pixels))) out.levels.push_back(v.value());
    return out;
}

std::unique_ptr<FeatureExtractor> load_extractor(const ExtractorConfig& config) {
    if (config.kind == "mini") return std::make_unique<FeatureExtractor>(config);
    if (config.weights_path.empty() || !std::filesystem::exists(config.weights_path)) {
        const std::string where = config.weights_path.empty() ? "no path configured" : config.weights_path.string();
        if (!config.allow_untrained) {
            fail(ErrorCategory::NotFound,
                 fmt::format("extractor weights not found ({}); pass --allow-untrained-extractor to use the "
                             "miniature random extractor",
                             where));
        }
        spdlog::warn("extractor weights not found ({}); falling back to the untrained miniature extractor", where);
        ExtractorConfig mini = ExtractorConfig::miniature();
        mini.seed = config.seed;
        mini.pyramid_scales = config.pyramid_scales;
        return std::make_unique<FeatureExtractor>(mini);
    }
    auto extractor = std::make_unique<FeatureExtractor>(config);
    import_parameters(extractor->params(), "vgg19.", read_checkpoint_file(config.weights_path));
    extractor->params().set_trainable(false);
    return extractor;
}

Var reconstruction_loss(const Var& pred, const Var& target, const FeatureExtractor& extractor) {
    if (pred.shape() != target.shape()) {
        fail(ErrorCategory::ShapeMismatch,
             fmt::format("loss inputs differ in shape: {} vs {}", pred.shape().str(), target.shape().str()));
    }
    const std::vector<Var> a = extractor.features(pred);
    const std::vector<Var> b = extractor.features(target);
    std::vector<Var> terms;
    for (std::size_t i = 0; i < a.size(); ++i) terms.push_back(ops::mean_abs_diff(a[i], b[i]));
    return ops::sum_scalars(terms);
}

std::vector<int> pyramid_scales_for(const ExtractorConfig& config, int side) {
    std::vector<int> scales;
    for (int s : config.pyramid_scales)
        if (s > 0 && s <= side && side % s == 0) scales.push_back(s);
    if (scales.empty()) {
        fail(ErrorCategory::ConfigMismatch,
             fmt::format("input side {} is smaller than every pyramid scale or divisible by none", side));
    }
    return scales;
}

Var pyramid_loss(const Var& pred, const Var& target, const FeatureExtractor& extractor) {
    if (pred.shape() != target.shape()) {
        fail(ErrorCategory::ShapeMismatch,
             fmt::format("loss inputs differ in shape: {} vs {}", pred.shape().str(), target.shape().str()));
    }
    const int side = pred.shape().h;
    if (pred.shape().w != side) fail(ErrorCategory::ShapeMismatch, "pyramid loss needs square inputs");
    std::vector<Var> terms;
    for (int scale : pyramid_scales_for(extractor.config(), side)) {
        const int factor = side / scale;
        const Var p = factor == 1 ? pred : ops::avg_pool(pred, factor);
        const Var t = factor == 1 ? target : ops::avg_pool(target, factor);
        terms.push_back(reconstruction_loss(p, t, extractor));
    }
    return ops::sum_scalars(terms);
}

double reconstruction_loss(const Frame& pred, const Frame& target, const FeatureExtractor& extractor) {
    NoGradGuard guard;
    return reconstruction_loss(Var(pred.pixels), Var(target.pixels), extractor).item();
}

double pyramid_loss(const Frame& pred, const Frame& target, const FeatureExtractor& extractor) {
    NoGradGuard guard;
    return pyramid_loss(Var(pred.pixels), Var(target.pixels), extractor).item();
}

}  // namespace kpmask
