#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "kpmask/image.hpp"

namespace kpmask {

enum class Split { Train, Eval };
std::string to_string(Split s);

struct Video {
    std::string id;
    FrameSequence frames;
};

struct VideoDataset {
    std::filesystem::path root;
    Split split = Split::Train;
    std::vector<Video> videos;

    std::size_t frame_count() const;
};

/// Reads a directory of frame images (lexicographic order, non-images
/// skipped) or a video container file.
FrameSequence load_video(const std::filesystem::path& path);

/// Center-crops to the shorter side's square, then resamples to target.
Frame preprocess(const Frame& frame, int target);

/// Loads `<root>/<split>/<video_id>/*.png`, preprocessing each frame to `side`
/// (side <= 0 keeps frames as stored).
VideoDataset load_dataset(const std::filesystem::path& root, Split split, int side);

/// Writes frames as `<root>/<split>/<video_id>/frame_%07d.png`.
void write_dataset(const VideoDataset& dataset, const std::filesystem::path& root);

/// Deterministic split: ids are ordered by a 64-bit hash and the first
/// floor(eval_ratio * n) go to the eval split.
std::vector<Split> assign_splits(const std::vector<std::string>& video_ids, double eval_ratio);
std::uint64_t video_id_hash(const std::string& id);

struct TrainingPair {
    Frame source;
    Frame driving;
};

/// Uniform video among those with >= 2 frames, then an ordered pair of
/// distinct frames from it.
TrainingPair sample_training_pair(const VideoDataset& dataset, std::uint64_t seed);

struct TrackPoint {
    std::string video_id;
    int frame = 0;
    int point_id = 0;
    double x = 0.0;  // column, pixel centers at integer coordinates
    double y = 0.0;  // row
};

struct SyntheticDataset {
    VideoDataset dataset;
    std::vector<TrackPoint> tracks;
};

/// Each video: a colored body disc plus a smaller contrasting limb disc that
/// orbits it, both moving smoothly over a fixed grayscale texture. Disc colors
/// are saturated and the background has r == g == b, so disc pixels are
/// separable by color. Track point 0 is the body center, point 1 the limb.
SyntheticDataset make_synthetic_dataset(int n_videos, int n_frames, int side, std::uint64_t seed);

void write_tracks_csv(const std::filesystem::path& path, const std::vector<TrackPoint>& tracks);

}  // namespace kpmask
