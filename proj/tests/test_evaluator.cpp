#include <fstream>

#include <gtest/gtest.h>

#include "kpmask/evaluator.hpp"
#include "support.hpp"

using namespace kpmask;
using kpmask::testing::random_tensor;
using kpmask::testing::scratch_dir;
namespace fs = std::filesystem;

namespace {

PoseFile random_pose(Rng& rng, int frames, int k, double present_rate = 1.0) {
    PoseFile p;
    for (int f = 0; f < frames; ++f) {
        std::vector<PosePoint> pts;
        for (int i = 0; i < k; ++i) pts.push_back({rng.uniform(0, 256), rng.uniform(0, 256), rng.uniform() < present_rate});
        p.frames.push_back(pts);
    }
    return p;
}

EmbeddingFile random_embedding(Rng& rng, int frames, int dim) {
    EmbeddingFile e;
    for (int f = 0; f < frames; ++f) {
        std::vector<double> v;
        for (int d = 0; d < dim; ++d) v.push_back(rng.uniform(-1, 1));
        e.frames.push_back(v);
    }
    return e;
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

TEST(L1, Examples) {
    const FrameSequence zeros{{Tensor(Shape{1, 3, 4, 4}, 0.0), "a", 0}};
    const FrameSequence ones{{Tensor(Shape{1, 3, 4, 4}, 1.0), "a", 0}};
    EXPECT_EQ(l1_metric(zeros, ones), 1.0);
    EXPECT_EQ(l1_metric(ones, ones), 0.0);
    const FrameSequence a{{Tensor(Shape{1, 1, 2, 2}, std::vector<double>{0.1, 0.5, 0.9, 0.0}), "a", 0}};
    const FrameSequence b{{Tensor(Shape{1, 1, 2, 2}, std::vector<double>{0.3, 0.5, 0.4, 1.0}), "a", 0}};
    EXPECT_NEAR(l1_metric(a, b), (0.2 + 0.0 + 0.5 + 1.0) / 4.0, 1e-15);
    EXPECT_EQ(category_of([&] { l1_metric(a, FrameSequence{}); }), ErrorCategory::ShapeMismatch);
    EXPECT_EQ(category_of([&] { l1_metric(a, ones); }), ErrorCategory::ShapeMismatch);
}

TEST(L1, MonotoneUnderBlending) {
    Rng rng(1);
    const Tensor a = random_tensor(Shape{1, 3, 8, 8}, rng, 0, 1);
    const Tensor b = random_tensor(Shape{1, 3, 8, 8}, rng, 0, 1);
    double prev = -1.0;
    for (int i = 0; i <= 20; ++i) {
        const double t = i / 20.0;
        Tensor m = a;
        for (std::size_t j = 0; j < m.size(); ++j) m[j] = (1 - t) * a[j] + t * b[j];
        const double v = l1_metric({{a, "x", 0}}, {{m, "x", 0}});
        EXPECT_GE(v, prev - 1e-15);
        prev = v;
    }
    EXPECT_GT(prev, 0.0);
}

TEST(Akd, Examples) {
    PoseFile a{{{{10, 10, true}}}};
    PoseFile b{{{{13, 14, true}}}};
    EXPECT_EQ(akd(a, b), 5.0);
    EXPECT_EQ(akd(a, a), 0.0);
    PoseFile absent{{{{13, 14, false}}}};
    EXPECT_EQ(category_of([&] { akd(a, absent); }), ErrorCategory::Undefined);
    PoseFile wide{{{{1, 1, true}, {2, 2, true}}}};
    EXPECT_EQ(category_of([&] { akd(a, wide); }), ErrorCategory::ConfigMismatch);
}

TEST(Akd, MixedPresenceByEnumeration) {
    Rng rng(2);
    for (int trial = 0; trial < 20; ++trial) {
        const PoseFile a = random_pose(rng, 5, 6, 0.7);
        const PoseFile b = random_pose(rng, 5, 6, 0.7);
        double sum = 0.0;
        int n = 0;
        for (int f = 0; f < 5; ++f)
            for (int k = 0; k < 6; ++k)
                if (a.frames[f][k].present && b.frames[f][k].present) {
                    const double dx = a.frames[f][k].x - b.frames[f][k].x, dy = a.frames[f][k].y - b.frames[f][k].y;
                    sum += std::sqrt(dx * dx + dy * dy);
                    ++n;
                }
        if (n == 0) continue;
        EXPECT_NEAR(akd(a, b), sum / n, 1e-12);
    }
}

TEST(Aed, Examples) {
    EmbeddingFile e1{{{1, 0, 0}, {1, 0, 0}}};
    EmbeddingFile e2{{{0, 1, 0}, {0, 1, 0}}};
    EXPECT_NEAR(aed(e1, e2), std::sqrt(2.0), 1e-15);
    EXPECT_EQ(aed(e1, e1), 0.0);
    Rng rng(3);
    const EmbeddingFile a = random_embedding(rng, 3, 4), b = random_embedding(rng, 3, 4);
    double expected = 0.0;
    for (int f = 0; f < 3; ++f) {
        double sq = 0.0;
        for (int d = 0; d < 4; ++d) sq += std::pow(a.frames[f][d] - b.frames[f][d], 2);
        expected += std::sqrt(sq) / 3.0;
    }
    EXPECT_NEAR(aed(a, b), expected, 1e-14);
    EmbeddingFile short_dim{{{1, 0}, {1, 0}}};
    EXPECT_EQ(category_of([&] { aed(e1, short_dim); }), ErrorCategory::ConfigMismatch);
}

TEST(Files, RoundTripAndSymmetry) {
    const fs::path dir = scratch_dir("metric_files");
    Rng rng(4);
    for (int i = 0; i < 100; ++i) {
        write_pose_csv(dir / "pa.csv", random_pose(rng, 4, 5, 0.8));
        write_pose_csv(dir / "pb.csv", random_pose(rng, 4, 5, 0.8));
        write_embedding_csv(dir / "ea.csv", random_embedding(rng, 4, 8));
        write_embedding_csv(dir / "eb.csv", random_embedding(rng, 4, 8));
        const PoseFile pa = read_pose_csv(dir / "pa.csv"), pb = read_pose_csv(dir / "pb.csv");
        const EmbeddingFile ea = read_embedding_csv(dir / "ea.csv"), eb = read_embedding_csv(dir / "eb.csv");
        EXPECT_EQ(aed(ea, eb), aed(eb, ea));
        try {
            EXPECT_EQ(akd(pa, pb), akd(pb, pa));
        } catch (const Error& e) {
            EXPECT_EQ(e.category(), ErrorCategory::Undefined);
        }
    }
    const PoseFile p = random_pose(rng, 2, 3);
    write_pose_csv(dir / "p.csv", p);
    const PoseFile q = read_pose_csv(dir / "p.csv");
    EXPECT_EQ(q.frames[1][2].x, p.frames[1][2].x);
    EXPECT_EQ(q.frames[1][2].present, p.frames[1][2].present);
}

TEST(Report, IdentityCopierScoresZero) {
    const fs::path dir = scratch_dir("report");
    const SyntheticDataset synth = make_synthetic_dataset(2, 3, 32, 1);
    std::vector<FrameSequence> copies;
    for (const Video& v : synth.dataset.videos) copies.push_back(v.frames);
    Rng rng(5);
    for (const Video& v : synth.dataset.videos) {
        const PoseFile p = random_pose(rng, 3, 4);
        write_pose_csv(dir / "poses" / "generated" / (v.id + ".csv"), p);
        write_pose_csv(dir / "poses" / "truth" / (v.id + ".csv"), p);
        const EmbeddingFile e = random_embedding(rng, 3, 6);
        write_embedding_csv(dir / "emb" / "generated" / (v.id + ".csv"), e);
        write_embedding_csv(dir / "emb" / "truth" / (v.id + ".csv"), e);
    }
    const MetricReport r = score_videos(synth.dataset.videos, copies, {dir / "poses", dir / "emb"});
    ASSERT_TRUE(r.akd && r.aed);
    EXPECT_EQ(*r.akd, 0.0);
    EXPECT_EQ(*r.aed, 0.0);
    EXPECT_EQ(r.l1, 0.0);

    r.write_csv(dir / "report.csv");
    std::ifstream in(dir / "report.csv");
    std::string line;
    std::getline(in, line);
    EXPECT_EQ(line, "video_id,akd,aed,l1");
    int rows = 0;
    std::string last;
    while (std::getline(in, line)) ++rows, last = line;
    EXPECT_EQ(rows, 3);
    EXPECT_EQ(last.substr(0, 5), "mean,");
    EXPECT_NE(r.table().find("AKD"), std::string::npos);
}

TEST(Report, MissingToolOutputsArePartial) {
    const SyntheticDataset synth = make_synthetic_dataset(1, 2, 32, 1);
    const MetricReport r =
        score_videos(synth.dataset.videos, {synth.dataset.videos[0].frames}, {fs::path("/nonexistent"), std::nullopt});
    EXPECT_FALSE(r.akd.has_value());
    EXPECT_FALSE(r.aed.has_value());
    EXPECT_EQ(r.l1, 0.0);
    EXPECT_NE(r.table().find("n/a"), std::string::npos);
}
