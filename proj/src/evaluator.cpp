#include "kpmask/evaluator.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "kpmask/animator.hpp"
#include "kpmask/error.hpp"

namespace kpmask {

namespace fs = std::filesystem;

namespace {

std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> out;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) out.push_back(cell);
    return out;
}

std::ifstream open_csv(const fs::path& path, std::string& header) {
    if (!fs::exists(path)) fail(ErrorCategory::NotFound, fmt::format("'{}' not found", path.string()));
    std::ifstream in(path);
    std::getline(in, header);
    return in;
}

std::ofstream create_csv(const fs::path& path) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out) fail(ErrorCategory::IoError, fmt::format("cannot write '{}'", path.string()));
    return out;
}

double parse_double(const std::string& s, const fs::path& path) {
    try {
        std::size_t used = 0;
        const double v = std::stod(s, &used);
        if (used == s.size()) return v;
    } catch (const std::exception&) {
    }
    fail(ErrorCategory::InvalidArgument, fmt::format("'{}': bad number '{}'", path.string(), s));
}

std::string cell(const std::optional<double>& v) { return v ? fmt::format("{:.6f}", *v) : ""; }

std::optional<double> mean_of(const std::vector<VideoMetrics>& rows, std::optional<double> VideoMetrics::*field) {
    double sum = 0.0;
    int n = 0;
    for (const VideoMetrics& r : rows)
        if (r.*field) {
            sum += *(r.*field);
            ++n;
        }
    if (n == 0) return std::nullopt;
    return sum / n;
}

}  // namespace

PoseFile read_pose_csv(const fs::path& path) {
    std::string header;
    std::ifstream in = open_csv(path, header);
    PoseFile poses;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto cells = split_csv(line);
        if (cells.size() != 5) fail(ErrorCategory::InvalidArgument, fmt::format("'{}': bad row '{}'", path.string(), line));
        const auto frame = static_cast<std::size_t>(parse_double(cells[0], path));
        const auto kp = static_cast<std::size_t>(parse_double(cells[1], path));
        if (poses.frames.size() <= frame) poses.frames.resize(frame + 1);
        auto& points = poses.frames[frame];
        if (points.size() <= kp) points.resize(kp + 1);
        points[kp] = {parse_double(cells[2], path), parse_double(cells[3], path), parse_double(cells[4], path) != 0.0};
    }
    return poses;
}

void write_pose_csv(const fs::path& path, const PoseFile& poses) {
    std::ofstream out = create_csv(path);
    out << "frame,kp_id,x,y,present\n";
    for (std::size_t f = 0; f < poses.frames.size(); ++f)
        for (std::size_t k = 0; k < poses.frames[f].size(); ++k) {
            const PosePoint& p = poses.frames[f][k];
            out << fmt::format("{},{},{:.17g},{:.17g},{}\n", f, k, p.x, p.y, p.present ? 1 : 0);
        }
}

EmbeddingFile read_embedding_csv(const fs::path& path) {
    std::string header;
    std::ifstream in = open_csv(path, header);
    EmbeddingFile emb;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto cells = split_csv(line);
        const auto frame = static_cast<std::size_t>(parse_double(cells.at(0), path));
        if (emb.frames.size() <= frame) emb.frames.resize(frame + 1);
        std::vector<double>& v = emb.frames[frame];
        v.clear();
        for (std::size_t i = 1; i < cells.size(); ++i) v.push_back(parse_double(cells[i], path));
    }
    return emb;
}

void write_embedding_csv(const fs::path& path, const EmbeddingFile& embeddings) {
    std::ofstream out = create_csv(path);
    out << "frame";
    const std::size_t dim = embeddings.frames.empty() ? 0 : embeddings.frames.front().size();
    for (std::size_t d = 0; d < dim; ++d) out << ",d" << d;
    out << '\n';
    for (std::size_t f = 0; f < embeddings.frames.size(); ++f) {
        out << f;
        for (double v : embeddings.frames[f]) out << fmt::format(",{:.17g}", v);
        out << '\n';
    }
}

double l1_metric(const FrameSequence& generated, const FrameSequence& truth) {
    if (generated.size() != truth.size() || generated.empty()) {
        fail(ErrorCategory::ShapeMismatch,
             fmt::format("sequence lengths differ or are empty: {} vs {}", generated.size(), truth.size()));
    }
    double total = 0.0;
    for (std::size_t f = 0; f < generated.size(); ++f) {
        const Tensor& a = generated[f].pixels;
        const Tensor& b = truth[f].pixels;
        if (a.shape() != b.shape()) {
            fail(ErrorCategory::ShapeMismatch,
                 fmt::format("frame {} shapes differ: {} vs {}", f, a.shape().str(), b.shape().str()));
        }
        double sum = 0.0;
        for (std::size_t i = 0; i < a.size(); ++i) sum += std::abs(a[i] - b[i]);
        total += sum / static_cast<double>(a.size());
    }
    return total / static_cast<double>(generated.size());
}

double akd(const PoseFile& generated, const PoseFile& truth) {
    if (generated.frames.size() != truth.frames.size()) {
        fail(ErrorCategory::ConfigMismatch, fmt::format("pose files cover {} and {} frames", generated.frames.size(),
                                                        truth.frames.size()));
    }
    double sum = 0.0;
    std::size_t n = 0;
    for (std::size_t f = 0; f < generated.frames.size(); ++f) {
        const auto& a = generated.frames[f];
        const auto& b = truth.frames[f];
        if (a.size() != b.size()) {
            fail(ErrorCategory::ConfigMismatch,
                 fmt::format("frame {}: {} vs {} keypoints in the pose schemas", f, a.size(), b.size()));
        }
        for (std::size_t k = 0; k < a.size(); ++k) {
            if (!a[k].present || !b[k].present) continue;
            sum += std::hypot(a[k].x - b[k].x, a[k].y - b[k].y);
            ++n;
        }
    }
    if (n == 0) fail(ErrorCategory::Undefined, "no keypoint is present in both pose files");
    return sum / static_cast<double>(n);
}

double aed(const EmbeddingFile& generated, const EmbeddingFile& truth) {
    if (generated.frames.size() != truth.frames.size() || generated.frames.empty()) {
        fail(ErrorCategory::ConfigMismatch, fmt::format("embedding files cover {} and {} frames",
                                                        generated.frames.size(), truth.frames.size()));
    }
    const std::size_t dim = generated.frames.front().size();
    double total = 0.0;
    for (std::size_t f = 0; f < generated.frames.size(); ++f) {
        const auto& a = generated.frames[f];
        const auto& b = truth.frames[f];
        if (a.size() != dim || b.size() != dim) {
            fail(ErrorCategory::ConfigMismatch,
                 fmt::format("frame {}: embedding dimensions {} and {}, expected {}", f, a.size(), b.size(), dim));
        }
        double sq = 0.0;
        for (std::size_t d = 0; d < dim; ++d) sq += (a[d] - b[d]) * (a[d] - b[d]);
        total += std::sqrt(sq);
    }
    return total / static_cast<double>(generated.frames.size());
}

void MetricReport::write_csv(const fs::path& path) const {
    std::ofstream out = create_csv(path);
    out << "video_id,akd,aed,l1\n";
    for (const VideoMetrics& v : videos)
        out << fmt::format("{},{},{},{:.6f}\n", v.video_id, cell(v.akd), cell(v.aed), v.l1);
    out << fmt::format("mean,{},{},{:.6f}\n", cell(akd), cell(aed), l1);
}

std::string MetricReport::table() const {
    auto show = [](const std::optional<double>& v) { return v ? fmt::format("{:.3f}", *v) : std::string("n/a"); };
    std::string out = fmt::format("{:<20} {:>8} {:>8} {:>8}\n", "video", "AKD", "AED", "L1");
    for (const VideoMetrics& v : videos)
        out += fmt::format("{:<20} {:>8} {:>8} {:>8.3f}\n", v.video_id, show(v.akd), show(v.aed), v.l1);
    out += fmt::format("{:<20} {:>8} {:>8} {:>8.3f}\n", "mean", show(akd), show(aed), l1);
    return out;
}

MetricReport score_videos(const std::vector<Video>& truth, const std::vector<FrameSequence>& generated,
                          const MetricSources& sources) {
    if (truth.size() != generated.size()) {
        fail(ErrorCategory::ShapeMismatch, fmt::format("{} truth videos but {} generated", truth.size(), generated.size()));
    }
    MetricReport report;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        VideoMetrics row;
        row.video_id = truth[i].id;
        row.l1 = l1_metric(generated[i], truth[i].frames);
        const std::string file = truth[i].id + ".csv";
        if (sources.poses) {
            const fs::path g = *sources.poses / "generated" / file;
            const fs::path t = *sources.poses / "truth" / file;
            if (fs::exists(g) && fs::exists(t)) {
                try {
                    row.akd = akd(read_pose_csv(g), read_pose_csv(t));
                } catch (const Error& e) {
                    if (e.category() != ErrorCategory::Undefined) throw;
                    spdlog::warn("AKD undefined for '{}': {}", truth[i].id, e.what());
                }
            } else {
                spdlog::warn("pose files for '{}' missing; AKD left empty", truth[i].id);
            }
        }
        if (sources.embeddings) {
            const fs::path g = *sources.embeddings / "generated" / file;
            const fs::path t = *sources.embeddings / "truth" / file;
            if (fs::exists(g) && fs::exists(t)) {
                row.aed = aed(read_embedding_csv(g), read_embedding_csv(t));
            } else {
                spdlog::warn("embedding files for '{}' missing; AED left empty", truth[i].id);
            }
        }
        report.videos.push_back(std::move(row));
    }
    report.akd = mean_of(report.videos, &VideoMetrics::akd);
    report.aed = mean_of(report.videos, &VideoMetrics::aed);
    double sum = 0.0;
    for (const VideoMetrics& v : report.videos) sum += v.l1;
    report.l1 = report.videos.empty() ? 0.0 : sum / static_cast<double>(report.videos.size());
    return report;
}

MetricReport evaluate_reconstruction(const VideoDataset& dataset, const Models& models, const MetricSources& sources,
                                     const fs::path& generated_dir) {
    std::vector<FrameSequence> generated;
    for (const Video& v : dataset.videos) {
        if (v.frames.empty()) fail(ErrorCategory::EmptyVideo, fmt::format("video '{}' has no frames", v.id));
        generated.push_back(animate_frames(models, TransferMode::Absolute, v.frames.front(), v.frames));
        if (!generated_dir.empty()) {
            const fs::path dir = generated_dir / v.id;
            fs::create_directories(dir);
            for (std::size_t t = 0; t < generated.back().size(); ++t)
                write_png(dir / fmt::format("frame_{:07d}.png", t), generated.back()[t].pixels);
        }
    }
    return score_videos(dataset.videos, generated, sources);
}

}  // namespace kpmask
