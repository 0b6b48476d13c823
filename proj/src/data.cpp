#include "kpmask/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>

#include <fmt/format.h>
#include <opencv2/imgproc.hpp>
#include <opencv2/videoio.hpp>

#include "kpmask/error.hpp"
#include "kpmask/nn.hpp"

namespace kpmask {

namespace fs = std::filesystem;

namespace {

Tensor tensor_from_bgr(const cv::Mat& bgr) {
    cv::Mat rgb;
    cv::cvtColor(bgr, rgb, cv::COLOR_BGR2RGB);
    cv::Mat f;
    rgb.convertTo(f, CV_64FC3);
    Tensor out(Shape{1, 3, f.rows, f.cols});
    for (int y = 0; y < f.rows; ++y) {
        const auto* row = f.ptr<cv::Vec3d>(y);
        for (int x = 0; x < f.cols; ++x)
            for (int c = 0; c < 3; ++c) out.at(0, c, y, x) = row[x][c] / 255.0;
    }
    return out;
}

FrameSequence load_container(const fs::path& path) {
    FrameSequence frames;
    cv::VideoCapture capture(path.string());
    if (!capture.isOpened()) return frames;
    cv::Mat bgr;
    while (capture.read(bgr)) {
        if (bgr.empty()) break;
        frames.push_back({tensor_from_bgr(bgr), path.stem().string(), static_cast<int>(frames.size())});
    }
    return frames;
}

double quantize(double v) { return std::round(std::clamp(v, 0.0, 1.0) * 255.0) / 255.0; }

}  // namespace

std::string to_string(Split s) { return s == Split::Train ? "train" : "eval"; }

std::size_t VideoDataset::frame_count() const {
    std::size_t total = 0;
    for (const Video& v : videos) total += v.frames.size();
    return total;
}

FrameSequence load_video(const fs::path& path) {
    if (!fs::exists(path)) fail(ErrorCategory::NotFound, fmt::format("video '{}' not found", path.string()));
    FrameSequence frames;
    if (fs::is_directory(path)) {
        std::vector<fs::path> files;
        for (const auto& entry : fs::directory_iterator(path))
            if (entry.is_regular_file()) files.push_back(entry.path());
        std::sort(files.begin(), files.end());
        const std::string id = path.filename().empty() ? path.parent_path().filename().string() : path.filename().string();
        for (const fs::path& f : files) {
            if (auto img = decode_image(f)) frames.push_back({*std::move(img), id, static_cast<int>(frames.size())});
        }
    } else if (auto img = decode_image(path)) {
        frames.push_back({*std::move(img), path.stem().string(), 0});
    } else {
        frames = load_container(path);
    }
    if (frames.empty()) fail(ErrorCategory::EmptyVideo, fmt::format("'{}' holds no decodable frames", path.string()));
    for (const Frame& f : frames) {
        if (f.pixels.shape() != frames.front().pixels.shape()) {
            fail(ErrorCategory::InconsistentFrames,
                 fmt::format("'{}': frame {} is {} but frame 0 is {}", path.string(), f.index, f.pixels.shape().str(),
                             frames.front().pixels.shape().str()));
        }
    }
    return frames;
}

Frame preprocess(const Frame& frame, int target) {
    if (target < 8) fail(ErrorCategory::InvalidTarget, fmt::format("target side {} is below the minimum of 8", target));
    const int h = frame.height();
    const int w = frame.width();
    const int side = std::min(h, w);
    Tensor cropped = frame.pixels;
    if (h != w) {
        const int y0 = (h - side) / 2;
        const int x0 = (w - side) / 2;
        const int channels = frame.pixels.shape().c;
        cropped = Tensor(Shape{1, channels, side, side});
        for (int c = 0; c < channels; ++c)
            for (int y = 0; y < side; ++y)
                for (int x = 0; x < side; ++x) cropped.at(0, c, y, x) = frame.pixels.at(0, c, y + y0, x + x0);
    }
    Tensor resized = resize_image(cropped, target, target);
    for (double& v : resized.values()) v = std::clamp(v, 0.0, 1.0);
    return {std::move(resized), frame.source_id, frame.index};
}

VideoDataset load_dataset(const fs::path& root, Split split, int side) {
    const fs::path dir = root / to_string(split);
    if (!fs::is_directory(dir)) fail(ErrorCategory::NotFound, fmt::format("dataset split '{}' not found", dir.string()));
    VideoDataset dataset{root, split, {}};
    std::vector<fs::path> video_dirs;
    for (const auto& entry : fs::directory_iterator(dir))
        if (entry.is_directory()) video_dirs.push_back(entry.path());
    std::sort(video_dirs.begin(), video_dirs.end());
    for (const fs::path& vd : video_dirs) {
        FrameSequence frames = load_video(vd);
        if (side > 0)
            for (Frame& f : frames) f = preprocess(f, side);
        dataset.videos.push_back({vd.filename().string(), std::move(frames)});
    }
    return dataset;
}

void write_dataset(const VideoDataset& dataset, const fs::path& root) {
    for (const Video& v : dataset.videos) {
        const fs::path dir = root / to_string(dataset.split) / v.id;
        fs::create_directories(dir);
        for (std::size_t i = 0; i < v.frames.size(); ++i) {
            write_png(dir / fmt::format("frame_{:07d}.png", i), v.frames[i].pixels);
        }
    }
}

std::uint64_t video_id_hash(const std::string& id) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : id) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::vector<Split> assign_splits(const std::vector<std::string>& video_ids, double eval_ratio) {
    if (eval_ratio < 0.0 || eval_ratio >= 1.0) {
        fail(ErrorCategory::InvalidArgument, fmt::format("eval ratio {} outside [0, 1)", eval_ratio));
    }
    std::vector<std::size_t> order(video_ids.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        const auto ha = video_id_hash(video_ids[a]);
        const auto hb = video_id_hash(video_ids[b]);
        return ha != hb ? ha < hb : video_ids[a] < video_ids[b];
    });
    const auto n_eval = static_cast<std::size_t>(std::floor(eval_ratio * static_cast<double>(video_ids.size())));
    std::vector<Split> splits(video_ids.size(), Split::Train);
    for (std::size_t i = 0; i < n_eval; ++i) splits[order[i]] = Split::Eval;
    return splits;
}

TrainingPair sample_training_pair(const VideoDataset& dataset, std::uint64_t seed) {
    std::vector<const Video*> eligible;
    for (const Video& v : dataset.videos)
        if (v.frames.size() >= 2) eligible.push_back(&v);
    if (eligible.empty()) fail(ErrorCategory::DatasetTooSmall, "no video has at least two frames");
    Rng rng(mix_seed(seed, 0x5041495253ULL));
    const Video& video = *eligible[rng.below(eligible.size())];
    const std::size_t count = video.frames.size();
    const std::size_t source = rng.below(count);
    std::size_t driving = rng.below(count - 1);
    if (driving >= source) ++driving;
    return {video.frames[source], video.frames[driving]};
}

SyntheticDataset make_synthetic_dataset(int n_videos, int n_frames, int side, std::uint64_t seed) {
    if (n_videos < 1 || n_frames < 2 || side < 32) {
        fail(ErrorCategory::InvalidArgument,
             fmt::format("synthetic dataset needs n_videos >= 1, n_frames >= 2, side >= 32 (got {}, {}, {})", n_videos,
                         n_frames, side));
    }
    constexpr double kTau = 2.0 * std::numbers::pi;
    Rng texture_rng(mix_seed(seed, 1));
    const double ph1 = texture_rng.uniform(0.0, kTau);
    const double ph2 = texture_rng.uniform(0.0, kTau);
    Tensor background(Shape{1, 3, side, side});
    for (int y = 0; y < side; ++y)
        for (int x = 0; x < side; ++x) {
            const double u = static_cast<double>(x) / side;
            const double v = static_cast<double>(y) / side;
            const double g = quantize(0.45 + 0.1 * std::sin(kTau * (2.0 * u + 1.0 * v) + ph1) +
                                      0.05 * std::sin(kTau * (-1.0 * u + 3.0 * v) + ph2));
            for (int c = 0; c < 3; ++c) background.at(0, c, y, x) = g;
        }

    const double body_r = std::max(3.0, 0.12 * side);
    const double limb_r = std::max(2.0, 0.07 * side);
    const double orbit = body_r + limb_r + 2.0;
    const double margin = orbit + limb_r + 2.0;
    const double lo = margin;
    const double hi = side - 1.0 - margin;
    const double mid = 0.5 * (lo + hi);
    const double amp = 0.5 * (hi - lo);

    SyntheticDataset out;
    out.dataset.split = Split::Train;
    for (int vi = 0; vi < n_videos; ++vi) {
        Rng rng(mix_seed(seed, 100 + static_cast<std::uint64_t>(vi)));
        const double body_color[3] = {quantize(rng.uniform(0.75, 1.0)), quantize(rng.uniform(0.05, 0.3)),
                                      quantize(rng.uniform(0.05, 0.3))};
        const double limb_color[3] = {quantize(rng.uniform(0.05, 0.3)), quantize(rng.uniform(0.5, 0.75)),
                                      quantize(rng.uniform(0.8, 1.0))};
        const double ax = amp * rng.uniform(0.4, 1.0);
        const double ay = amp * rng.uniform(0.4, 1.0);
        const double fx = rng.uniform(0.5, 1.0);
        const double fy = rng.uniform(0.5, 1.0);
        const double phx = rng.uniform(0.0, kTau);
        const double phy = rng.uniform(0.0, kTau);
        const double theta0 = rng.uniform(0.0, kTau);
        const double omega = rng.uniform(-1.0, 1.0) * kTau / n_frames;

        Video video;
        video.id = fmt::format("synth_{:04d}", vi);
        for (int t = 0; t < n_frames; ++t) {
            const double phase = static_cast<double>(t) / n_frames;
            const double bx = mid + ax * std::sin(kTau * fx * phase + phx);
            const double by = mid + ay * std::sin(kTau * fy * phase + phy);
            const double theta = theta0 + omega * t;
            const double lx = bx + orbit * std::cos(theta);
            const double ly = by + orbit * std::sin(theta);

            Tensor pixels = background;
            auto draw = [&](double cx, double cy, double r, const double* color) {
                for (int y = 0; y < side; ++y)
                    for (int x = 0; x < side; ++x) {
                        const double dx = x - cx;
                        const double dy = y - cy;
                        if (dx * dx + dy * dy <= r * r)
                            for (int c = 0; c < 3; ++c) pixels.at(0, c, y, x) = color[c];
                    }
            };
            draw(bx, by, body_r, body_color);
            draw(lx, ly, limb_r, limb_color);
            video.frames.push_back({std::move(pixels), video.id, t});
            out.tracks.push_back({video.id, t, 0, bx, by});
            out.tracks.push_back({video.id, t, 1, lx, ly});
        }
        out.dataset.videos.push_back(std::move(video));
    }
    return out;
}

void write_tracks_csv(const fs::path& path, const std::vector<TrackPoint>& tracks) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out) fail(ErrorCategory::IoError, fmt::format("cannot write '{}'", path.string()));
    out << "video_id,frame,point_id,x,y\n";
    for (const TrackPoint& p : tracks) out << fmt::format("{},{},{},{:.6f},{:.6f}\n", p.video_id, p.frame, p.point_id, p.x, p.y);
}

}  // namespace kpmask
