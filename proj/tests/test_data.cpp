#include <set>

#include <fmt/format.h>
#include <gtest/gtest.h>

#include "kpmask/data.hpp"
#include "support.hpp"

using namespace kpmask;
using kpmask::testing::random_tensor;
using kpmask::testing::scratch_dir;
namespace fs = std::filesystem;

namespace {

ErrorCategory category_of(const std::function<void()>& f) {
    try {
        f();
    } catch (const Error& e) {
        return e.category();
    }
    ADD_FAILURE() << "no error raised";
    return ErrorCategory::InvalidArgument;
}

Frame gray(int h, int w, double v) { return {Tensor(Shape{1, 3, h, w}, v), "g", 0}; }

}  // namespace

TEST(LoadVideo, ReadsFramesInNameOrder) {
    const fs::path dir = scratch_dir("load_video");
    for (int i : {2, 0, 1}) write_png(dir / fmt::format("frame_{:07d}.png", i), Tensor(Shape{1, 3, 16, 16}, i / 255.0));
    const FrameSequence frames = load_video(dir);
    ASSERT_EQ(frames.size(), 3u);
    for (int i = 0; i < 3; ++i) {
        EXPECT_EQ(frames[i].pixels.shape(), (Shape{1, 3, 16, 16}));
        EXPECT_DOUBLE_EQ(frames[i].pixels[0], i / 255.0);
        EXPECT_EQ(frames[i].index, i);
    }
}

TEST(LoadVideo, FullWhiteIsOne) {
    const fs::path dir = scratch_dir("white");
    write_png(dir / "a.png", Tensor(Shape{1, 3, 4, 4}, 1.0));
    EXPECT_EQ(load_video(dir).front().pixels.max(), 1.0);
    EXPECT_EQ(load_video(dir).front().pixels.min(), 1.0);
}

TEST(LoadVideo, Errors) {
    const fs::path dir = scratch_dir("errors");
    EXPECT_EQ(category_of([&] { load_video(dir / "missing"); }), ErrorCategory::NotFound);
    fs::create_directories(dir / "empty");
    EXPECT_EQ(category_of([&] { load_video(dir / "empty"); }), ErrorCategory::EmptyVideo);
    fs::create_directories(dir / "mixed");
    write_png(dir / "mixed" / "a.png", Tensor(Shape{1, 3, 4, 4}));
    write_png(dir / "mixed" / "b.png", Tensor(Shape{1, 3, 8, 4}));
    EXPECT_EQ(category_of([&] { load_video(dir / "mixed"); }), ErrorCategory::InconsistentFrames);
}

TEST(Preprocess, ShapesAndCrop) {
    EXPECT_EQ(preprocess(gray(512, 512, 0.5), 256).pixels.shape(), (Shape{1, 3, 256, 256}));
    Rng rng(1);
    Frame wide{random_tensor(Shape{1, 3, 256, 320}, rng, 0, 1), "w", 0};
    const Frame out = preprocess(wide, 256);
    ASSERT_EQ(out.pixels.shape(), (Shape{1, 3, 256, 256}));
    // centre crop starts at column 32; the resize is an identity
    for (int c = 0; c < 3; ++c)
        for (int y = 0; y < 256; y += 17)
            for (int x = 0; x < 256; x += 13) EXPECT_DOUBLE_EQ(out.pixels.at(0, c, y, x), wide.pixels.at(0, c, y, x + 32));
    EXPECT_EQ(category_of([] { preprocess(gray(16, 16, 0.1), 7); }), ErrorCategory::InvalidTarget);
}

TEST(Preprocess, ConstantStaysConstant) {
    const Frame out = preprocess(gray(100, 60, 0.375), 64);
    EXPECT_EQ(out.pixels.shape(), (Shape{1, 3, 64, 64}));
    for (double v : out.pixels.values()) EXPECT_NEAR(v, 0.375, 1e-12);
    const Frame up = preprocess(gray(20, 30, 0.6), 64);
    for (double v : up.pixels.values()) EXPECT_NEAR(v, 0.6, 1e-12);
}

TEST(Preprocess, IdempotentOnTargetSquare) {
    Rng rng(2);
    Frame f{random_tensor(Shape{1, 3, 32, 32}, rng, 0, 1), "x", 0};
    EXPECT_EQ(preprocess(f, 32).pixels, f.pixels);
    EXPECT_EQ(preprocess(preprocess(f, 32), 32).pixels, f.pixels);
}

TEST(Sampling, TwoFrameVideoAndDeterminism) {
    VideoDataset ds;
    ds.videos.push_back({"v", {gray(8, 8, 0.0), gray(8, 8, 1.0)}});
    ds.videos[0].frames[1].index = 1;
    std::set<std::pair<int, int>> seen;
    for (std::uint64_t s = 0; s < 50; ++s) {
        const TrainingPair p = sample_training_pair(ds, s);
        seen.insert({p.source.index, p.driving.index});
        const TrainingPair q = sample_training_pair(ds, s);
        EXPECT_EQ(p.source.index, q.source.index);
        EXPECT_EQ(p.driving.index, q.driving.index);
    }
    EXPECT_EQ(seen, (std::set<std::pair<int, int>>{{0, 1}, {1, 0}}));
}

TEST(Sampling, CoverageAndNoCrossing) {
    const SyntheticDataset synth = make_synthetic_dataset(3, 10, 32, 4);
    std::set<int> driving_seen;
    for (std::uint64_t s = 0; s < 10000; ++s) {
        const TrainingPair p = sample_training_pair(synth.dataset, s);
        ASSERT_EQ(p.source.source_id, p.driving.source_id);
        ASSERT_NE(p.source.index, p.driving.index);
        if (s < 1000 && p.driving.source_id == "synth_0000") driving_seen.insert(p.driving.index);
    }
    EXPECT_EQ(driving_seen.size(), 10u);
}

TEST(Sampling, TooSmall) {
    VideoDataset ds;
    ds.videos.push_back({"v", {gray(8, 8, 0.0)}});
    EXPECT_EQ(category_of([&] { sample_training_pair(ds, 0); }), ErrorCategory::DatasetTooSmall);
}

TEST(Synthetic, DeterministicAndInRange) {
    const SyntheticDataset a = make_synthetic_dataset(2, 3, 48, 9);
    const SyntheticDataset b = make_synthetic_dataset(2, 3, 48, 9);
    ASSERT_EQ(a.dataset.videos.size(), 2u);
    for (std::size_t v = 0; v < 2; ++v)
        for (std::size_t f = 0; f < 3; ++f) {
            EXPECT_EQ(a.dataset.videos[v].frames[f].pixels, b.dataset.videos[v].frames[f].pixels);
            EXPECT_GE(a.dataset.videos[v].frames[f].pixels.min(), 0.0);
            EXPECT_LE(a.dataset.videos[v].frames[f].pixels.max(), 1.0);
        }
}

TEST(Synthetic, TracksMatchPixelCentroids) {
    const SyntheticDataset synth = make_synthetic_dataset(3, 6, 64, 21);
    for (const TrackPoint& t : synth.tracks) {
        const Video* video = nullptr;
        for (const Video& v : synth.dataset.videos)
            if (v.id == t.video_id) video = &v;
        ASSERT_NE(video, nullptr);
        const Tensor& px = video->frames[t.frame].pixels;
        // body pixels are red dominant, limb pixels blue dominant; the
        // background is gray so either test excludes it
        double sx = 0, sy = 0, n = 0;
        for (int y = 0; y < 64; ++y)
            for (int x = 0; x < 64; ++x) {
                const double r = px.at(0, 0, y, x), g = px.at(0, 1, y, x), b = px.at(0, 2, y, x);
                const bool body = r > g + 0.2 && r > b + 0.2;
                const bool limb = b > r + 0.2;
                if ((t.point_id == 0 && body) || (t.point_id == 1 && limb)) {
                    sx += x;
                    sy += y;
                    n += 1;
                }
            }
        ASSERT_GT(n, 0);
        EXPECT_LE(std::hypot(sx / n - t.x, sy / n - t.y), 1.0) << t.video_id << " frame " << t.frame;
    }
}

TEST(Synthetic, DisplacementMatchesTrack) {
    const SyntheticDataset synth = make_synthetic_dataset(1, 2, 64, 3);
    ASSERT_EQ(synth.tracks.size(), 4u);
    EXPECT_EQ(synth.tracks[0].frame, 0);
    EXPECT_EQ(synth.tracks[2].frame, 1);
    EXPECT_EQ(synth.tracks[2].point_id, 0);
}

TEST(Splits, DisjointAndDeterministic) {
    std::vector<std::string> ids;
    for (int i = 0; i < 40; ++i) ids.push_back(fmt::format("vid{}", i));
    const auto a = assign_splits(ids, 0.25);
    EXPECT_EQ(a, assign_splits(ids, 0.25));
    EXPECT_EQ(std::count(a.begin(), a.end(), Split::Eval), 10);
    EXPECT_EQ(std::count(a.begin(), a.end(), Split::Eval) + std::count(a.begin(), a.end(), Split::Train), 40);
}

TEST(Dataset, WriteThenLoad) {
    const fs::path root = scratch_dir("dataset");
    SyntheticDataset synth = make_synthetic_dataset(2, 3, 32, 5);
    write_dataset(synth.dataset, root);
    const VideoDataset back = load_dataset(root, Split::Train, 32);
    ASSERT_EQ(back.videos.size(), 2u);
    EXPECT_EQ(back.videos[0].id, "synth_0000");
    EXPECT_EQ(back.videos[1].frames.size(), 3u);
    EXPECT_EQ(back.videos[0].frames[2].pixels, synth.dataset.videos[0].frames[2].pixels);
}
