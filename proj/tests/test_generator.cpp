#include <gtest/gtest.h>

#include "kpmask/generator.hpp"
#include "kpmask/ops.hpp"
#include "support.hpp"

using namespace kpmask;
using kpmask::testing::check_gradients;
using kpmask::testing::random_tensor;

namespace {

GeneratorConfig make_config(int side, int channels, int blocks, int depth) {
    GeneratorConfig c;
    c.input_side = side;
    c.lowres_side = side / 4;
    c.base_channels = channels;
    c.n_residual_blocks = blocks;
    c.highres_depth = depth;
    c.max_channels = 8 * channels;
    return c;
}

struct Inputs {
    Var source, source_mask, driving_mask, target;
};

Inputs random_inputs(const GeneratorConfig& c, int n, std::uint64_t seed) {
    Rng rng(seed);
    return {Var(random_tensor(Shape{n, 3, c.input_side, c.input_side}, rng, 0, 1)),
            Var(random_tensor(Shape{n, 1, c.lowres_side, c.lowres_side}, rng, 0, 1)),
            Var(random_tensor(Shape{n, 1, c.lowres_side, c.lowres_side}, rng, 0, 1)),
            Var(random_tensor(Shape{n, 3, c.input_side, c.input_side}, rng, 0, 1))};
}

ErrorCategory category_of(const std::function<void()>& f) {
    try {
        f();
    } catch (const Error& e) {
        return e.category();
    }
    ADD_FAILURE() << "no error raised";
    return ErrorCategory::InvalidArgument;
}

}  // namespace

TEST(Generator, LowResShapeAndRange) {
    const GeneratorConfig c = make_config(64, 8, 1, 3);
    const Generator gen(c, 1);
    const Inputs in = random_inputs(c, 2, 2);
    NoGradGuard guard;
    const Var small = ops::avg_pool(in.source, 4);
    const Tensor out = gen.low_res_generate(small, in.source_mask, in.driving_mask, false).value();
    EXPECT_EQ(out.shape(), (Shape{2, 3, 64, 64}));
    EXPECT_GT(out.min(), 0.0);
    EXPECT_LT(out.max(), 1.0);
    EXPECT_EQ(out, gen.low_res_generate(small, in.source_mask, in.driving_mask, false).value());
}

TEST(Generator, SynthesizeContracts) {
    for (auto [side, ch, blocks, depth] : {std::tuple{32, 8, 1, 2}, {64, 16, 2, 3}}) {
        const GeneratorConfig c = make_config(side, ch, blocks, depth);
        const Generator gen(c, 3);
        Rng rng(4);
        const Frame src{random_tensor(Shape{1, 3, side, side}, rng, 0, 1), "s", 0};
        const StructuralMask sm{random_tensor(Shape{1, 1, side / 4, side / 4}, rng, 0, 1)};
        const StructuralMask dm{random_tensor(Shape{1, 1, side / 4, side / 4}, rng, 0, 1)};
        const Frame out = gen.synthesize(src, sm, dm);
        EXPECT_EQ(out.pixels.shape(), (Shape{1, 3, side, side}));
        EXPECT_GE(out.pixels.min(), 0.0);
        EXPECT_LE(out.pixels.max(), 1.0);
        EXPECT_EQ(out.pixels, gen.synthesize(src, sm, dm).pixels);
    }
}

TEST(Generator, ShapeGuards) {
    EXPECT_EQ(category_of([] { Generator(make_config(240, 8, 1, 5), 0); }), ErrorCategory::ShapeMismatch);
    GeneratorConfig odd = make_config(64, 8, 1, 2);
    odd.lowres_side = 32;
    EXPECT_EQ(category_of([&] { Generator(odd, 0); }), ErrorCategory::ShapeMismatch);
    const GeneratorConfig c = make_config(32, 8, 1, 2);
    const Generator gen(c, 5);
    Rng rng(6);
    const Var src(random_tensor(Shape{1, 3, 32, 32}, rng));
    const Var bad_mask(random_tensor(Shape{1, 1, 16, 16}, rng));
    const Var mask(random_tensor(Shape{1, 1, 8, 8}, rng));
    EXPECT_EQ(category_of([&] { gen.forward(src, bad_mask, mask, false); }), ErrorCategory::ShapeMismatch);
    EXPECT_EQ(category_of([&] { gen.high_res_refine(src, Var(random_tensor(Shape{1, 3, 16, 16}, rng)), false); }),
              ErrorCategory::ShapeMismatch);
}

TEST(Generator, EveryParameterGetsGradient) {
    const GeneratorConfig c = make_config(64, 16, 2, 3);
    Generator gen(c, 7);
    const Inputs in = random_inputs(c, 2, 8);
    backward(ops::mean_abs_diff(gen.forward(in.source, in.source_mask, in.driving_mask, true), in.target));
    for (const NamedParameter& p : gen.params().parameters()) {
        ASSERT_TRUE(p.var.has_grad()) << p.name;
        double norm = 0.0;
        for (double g : p.var.grad().values()) norm += g * g;
        EXPECT_GT(norm, 0.0) << p.name;
    }
}

TEST(Generator, FiniteDifferenceOnMiniature) {
    const GeneratorConfig c = make_config(32, 8, 1, 2);
    Generator gen(c, 9);
    const Inputs in = random_inputs(c, 2, 10);
    std::vector<Var> params;
    for (const NamedParameter& p : gen.params().parameters()) params.push_back(p.var);
    const auto r = check_gradients(
        [&] { return ops::mean_abs_diff(gen.forward(in.source, in.source_mask, in.driving_mask, true), in.target); },
        params, 4, 11);
    EXPECT_LT(r.rel_error, 1e-3) << "checked " << r.checked;
    EXPECT_GT(r.checked, 100u);
}
