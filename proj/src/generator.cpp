#include "kpmask/generator.hpp"

#include <array>

#include <fmt/format.h>

#include "kpmask/error.hpp"
#include "kpmask/ops.hpp"

namespace kpmask {

Generator::Generator(const GeneratorConfig& config, std::uint64_t seed) : config_(config) {
    config_.validate();
    Rng rng(seed);
    const int c = config_.base_channels;
    encoder_conv_ = Conv2d(params_, "lowres.encoder.conv", 5, c, 7, false, rng);
    encoder_norm_ = BatchNorm2d(params_, "lowres.encoder.norm", c);
    source_conv_ = Conv2d(params_, "lowres.source.conv", 3, c, 7, false, rng);
    source_norm_ = BatchNorm2d(params_, "lowres.source.norm", c);
    for (int i = 0; i < config_.n_residual_blocks; ++i) {
        const std::string name = fmt::format("lowres.res{}", i);
        Residual r;
        r.norm1 = BatchNorm2d(params_, name + ".norm1", c);
        r.conv1 = Conv2d(params_, name + ".conv1", c, c, 3, false, rng);
        r.norm2 = BatchNorm2d(params_, name + ".norm2", c);
        r.conv2 = Conv2d(params_, name + ".conv2", c, c, 3, false, rng);
        residual_.push_back(std::move(r));
    }
    for (int i = 0; i < 2; ++i) decoder_norm_.emplace_back(params_, fmt::format("lowres.decoder{}.norm", i), c);
    lowres_out_ = Conv2d(params_, "lowres.out", c, 3, 7, true, rng);
    refiner_ = Hourglass(params_, "highres",
                         HourglassConfig{6, config_.base_channels, config_.highres_depth, config_.max_channels}, rng);
    highres_out_ = Conv2d(params_, "highres.out", refiner_.out_channels(), 3, 1, true, rng);
}

Var Generator::low_res_generate(const Var& source_small, const Var& source_mask, const Var& driving_mask,
                                bool training) const {
    const Shape& s = source_small.shape();
    const Shape& a = source_mask.shape();
    const Shape& b = driving_mask.shape();
    const int side = config_.lowres_side;
    if (s.c != 3 || s.h != side || s.w != side || a.c != 1 || b.c != 1 || a.h != side || a.w != side ||
        b.h != side || b.w != side || a.n != s.n || b.n != s.n) {
        fail(ErrorCategory::ShapeMismatch,
             fmt::format("low-res generator expects N x 3 x {0} x {0} source and N x 1 x {0} x {0} masks, got {1}, {2}, {3}",
                         side, s.str(), a.str(), b.str()));
    }
    const std::array<Var, 3> parts{source_small, source_mask, driving_mask};
    Var h = ops::relu(encoder_norm_(encoder_conv_(ops::concat_channels(parts)), training));
    const Var src = ops::relu(source_norm_(source_conv_(source_small), training));
    h = ops::add(h, src);
    for (const Residual& r : residual_) {
        Var t = r.conv1(ops::relu(r.norm1(h, training)));
        t = r.conv2(ops::relu(r.norm2(t, training)));
        h = ops::add(h, t);
    }
    for (const BatchNorm2d& norm : decoder_norm_) h = ops::relu(norm(ops::upsample_nearest(h, 2), training));
    return ops::sigmoid(lowres_out_(h));
}

Var Generator::high_res_refine(const Var& coarse, const Var& source, bool training) const {
    const Shape& c = coarse.shape();
    const Shape& s = source.shape();
    if (c != s || c.c != 3 || c.h != config_.input_side || c.w != config_.input_side) {
        fail(ErrorCategory::ShapeMismatch,
             fmt::format("high-res refiner expects two N x 3 x {0} x {0} inputs, got {1} and {2}", config_.input_side,
                         c.str(), s.str()));
    }
    const std::array<Var, 2> parts{coarse, source};
    return ops::sigmoid(highres_out_(refiner_(ops::concat_channels(parts), training)));
}

Var Generator::forward(const Var& source, const Var& source_mask, const Var& driving_mask, bool training) const {
    const Shape& s = source.shape();
    if (s.h != config_.input_side || s.w != config_.input_side) {
        fail(ErrorCategory::ShapeMismatch,
             fmt::format("generator expects {0} x {0} sources, got {1}", config_.input_side, s.str()));
    }
    const Var small = ops::avg_pool(source, config_.input_side / config_.lowres_side);
    return high_res_refine(low_res_generate(small, source_mask, driving_mask, training), source, training);
}

Frame Generator::synthesize(const Frame& source, const StructuralMask& source_mask,
                            const StructuralMask& driving_mask) const {
    NoGradGuard guard;
    Var out = forward(Var(source.pixels), Var(source_mask.map), Var(driving_mask.map), false);
    return {out.value(), source.source_id, source.index};
}

}  // namespace kpmask
