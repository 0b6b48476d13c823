#pragma once

#include <optional>

#include "kpmask/data.hpp"
#include "kpmask/trainer.hpp"

namespace kpmask {

struct PosePoint {
    double x = 0.0;
    double y = 0.0;
    bool present = false;
};

/// Per-frame body keypoints in pixels, as written by an external pose tool.
struct PoseFile {
    std::vector<std::vector<PosePoint>> frames;
};

/// Per-frame identity embeddings of constant dimension.
struct EmbeddingFile {
    std::vector<std::vector<double>> frames;
};

/// CSV `frame,kp_id,x,y,present`.
PoseFile read_pose_csv(const std::filesystem::path& path);
void write_pose_csv(const std::filesystem::path& path, const PoseFile& poses);
/// CSV `frame,d0,d1,...`.
EmbeddingFile read_embedding_csv(const std::filesystem::path& path);
void write_embedding_csv(const std::filesystem::path& path, const EmbeddingFile& embeddings);

/// Mean over frames of the mean absolute pixel difference.
double l1_metric(const FrameSequence& generated, const FrameSequence& truth);
/// Mean pixel distance over keypoints present in both files; Undefined when
/// none are.
double akd(const PoseFile& generated, const PoseFile& truth);
/// Mean over frames of the Euclidean embedding distance.
double aed(const EmbeddingFile& generated, const EmbeddingFile& truth);

struct VideoMetrics {
    std::string video_id;
    std::optional<double> akd;
    std::optional<double> aed;
    double l1 = 0.0;
};

struct MetricReport {
    std::vector<VideoMetrics> videos;
    /// Means over the videos where each metric is available.
    std::optional<double> akd;
    std::optional<double> aed;
    double l1 = 0.0;

    void write_csv(const std::filesystem::path& path) const;
    std::string table() const;
};

/// External tool outputs: <dir>/generated/<video_id>.csv and
/// <dir>/truth/<video_id>.csv. Missing files leave the metric empty.
struct MetricSources {
    std::optional<std::filesystem::path> poses;
    std::optional<std::filesystem::path> embeddings;
};

/// Scores already generated videos against ground truth.
MetricReport score_videos(const std::vector<Video>& truth, const std::vector<FrameSequence>& generated,
                          const MetricSources& sources);

/// Reconstructs each video from its own first frame (absolute transfer).
/// Generated frames are written below `generated_dir` when it is non-empty,
/// so the external pose and embedding tools can run on them.
MetricReport evaluate_reconstruction(const VideoDataset& dataset, const Models& models, const MetricSources& sources,
                                     const std::filesystem::path& generated_dir = {});

}  // namespace kpmask
