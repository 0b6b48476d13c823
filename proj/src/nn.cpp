#include "kpmask/nn.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include <fmt/format.h>

#include "kpmask/error.hpp"
#include "kpmask/ops.hpp"

namespace kpmask {

double Rng::normal() {
    if (has_spare_) {
        has_spare_ = false;
        return spare_;
    }
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    spare_ = radius * std::sin(2.0 * std::numbers::pi * u2);
    has_spare_ = true;
    return radius * std::cos(2.0 * std::numbers::pi * u2);
}

std::uint64_t Rng::below(std::uint64_t bound) {
    if (bound == 0) fail(ErrorCategory::InvalidArgument, "Rng::below(0)");
    // Rejection sampling keeps the draw unbiased.
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % bound;
    std::uint64_t v = engine_();
    while (v >= limit) v = engine_();
    return v % bound;
}

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
    std::uint64_t z = a + 0x9E3779B97F4A7C15ULL * (b + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

Var ParameterSet::add_parameter(const std::string& name, Tensor init) {
    Var v(std::move(init), trainable_);
    parameters_.push_back({name, v});
    return v;
}

std::shared_ptr<Tensor> ParameterSet::add_buffer(const std::string& name, Tensor init) {
    auto t = std::make_shared<Tensor>(std::move(init));
    buffers_.push_back({name, t});
    return t;
}

void ParameterSet::set_trainable(bool trainable) {
    trainable_ = trainable;
    for (NamedParameter& p : parameters_) {
        p.var.node()->requires_grad = trainable;
        p.var.zero_grad();
    }
}

void ParameterSet::zero_grad() {
    for (NamedParameter& p : parameters_) p.var.zero_grad();
}

std::size_t ParameterSet::parameter_count() const {
    std::size_t total = 0;
    for (const NamedParameter& p : parameters_) total += p.var.value().size();
    return total;
}

Conv2d::Conv2d(ParameterSet& params, const std::string& name, int in_channels, int out_channels, int kernel,
               bool bias, Rng& rng)
    : has_bias_(bias), out_channels_(out_channels) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(in_channels * kernel * kernel));
    Tensor w(Shape{out_channels, in_channels, kernel, kernel});
    for (double& v : w.values()) v = rng.uniform(-bound, bound);
    weight_ = params.add_parameter(name + ".weight", std::move(w));
    if (bias) {
        Tensor b(Shape{out_channels, 1, 1, 1});
        for (double& v : b.values()) v = rng.uniform(-bound, bound);
        bias_ = params.add_parameter(name + ".bias", std::move(b));
    }
}

Var Conv2d::operator()(const Var& x) const { return ops::conv2d(x, weight_, has_bias_ ? &bias_ : nullptr); }

BatchNorm2d::BatchNorm2d(ParameterSet& params, const std::string& name, int channels) {
    gamma_ = params.add_parameter(name + ".weight", Tensor(Shape{channels, 1, 1, 1}, 1.0));
    beta_ = params.add_parameter(name + ".bias", Tensor(Shape{channels, 1, 1, 1}, 0.0));
    running_mean_ = params.add_buffer(name + ".running_mean", Tensor(Shape{channels, 1, 1, 1}, 0.0));
    running_var_ = params.add_buffer(name + ".running_var", Tensor(Shape{channels, 1, 1, 1}, 1.0));
}

Var BatchNorm2d::operator()(const Var& x, bool training) const {
    return ops::batch_norm(x, gamma_, beta_, ops::BatchNormState{running_mean_.get(), running_var_.get()}, training);
}

Hourglass::Hourglass(ParameterSet& params, const std::string& name, const HourglassConfig& config, Rng& rng)
    : config_(config) {
    if (config.depth < 1) fail(ErrorCategory::ConfigMismatch, "hourglass depth must be >= 1");
    auto width = [&](int level) { return std::min(config.max_channels, config.base_channels << level); };
    for (int i = 0; i < config.depth; ++i) {
        const int in = i == 0 ? config.in_channels : width(i);
        const int out = width(i + 1);
        const std::string prefix = fmt::format("{}.down{}", name, i);
        down_.push_back({Conv2d(params, prefix + ".conv", in, out, 3, false, rng),
                         BatchNorm2d(params, prefix + ".norm", out)});
    }
    up_.resize(config.depth);
    for (int i = config.depth - 1; i >= 0; --i) {
        const int in = (i == config.depth - 1 ? 1 : 2) * width(i + 1);
        const int out = width(i);
        const std::string prefix = fmt::format("{}.up{}", name, i);
        up_[i] = {Conv2d(params, prefix + ".conv", in, out, 3, false, rng), BatchNorm2d(params, prefix + ".norm", out)};
    }
}

Var Hourglass::operator()(const Var& x, bool training) const {
    const int factor = 1 << config_.depth;
    if (x.shape().h % factor != 0 || x.shape().w % factor != 0) {
        fail(ErrorCategory::ShapeMismatch,
             fmt::format("hourglass of depth {} needs sides divisible by {}, got {}", config_.depth, factor,
                         x.shape().str()));
    }
    std::vector<Var> skips{x};
    Var h = x;
    for (const Block& b : down_) {
        h = ops::avg_pool(ops::relu(b.norm(b.conv(h), training)), 2);
        skips.push_back(h);
    }
    skips.pop_back();
    for (int i = config_.depth - 1; i >= 0; --i) {
        const Block& b = up_[i];
        h = ops::relu(b.norm(b.conv(ops::upsample_nearest(h, 2)), training));
        const Var parts[] = {h, skips.back()};
        skips.pop_back();
        h = ops::concat_channels(parts);
    }
    return h;
}

}  // namespace kpmask
