#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace kpmask {

enum class MaskVariant { Heatmap, Circles };
enum class TransferMode { Absolute, Relative };
enum class DetectorMode { Frozen, Finetune };

std::string to_string(MaskVariant v);
std::string to_string(TransferMode m);
std::string to_string(DetectorMode m);
MaskVariant parse_mask_variant(const std::string& s);
TransferMode parse_transfer_mode(const std::string& s);
DetectorMode parse_detector_mode(const std::string& s);

/// Flat `key = value` text with `#` comments. Later assignments win.
class KeyValueConfig {
public:
    static KeyValueConfig parse(const std::string& text);
    static KeyValueConfig load(const std::filesystem::path& path);

    void set(const std::string& key, const std::string& value) { values_[key] = value; }
    /// Applies a `key=value` override string.
    void apply_override(const std::string& assignment);
    void merge(const KeyValueConfig& other);

    bool contains(const std::string& key) const { return values_.count(key) != 0; }
    std::optional<std::string> find(const std::string& key) const;

    std::string get_string(const std::string& key, const std::string& fallback) const;
    int get_int(const std::string& key, int fallback) const;
    std::int64_t get_int64(const std::string& key, std::int64_t fallback) const;
    double get_double(const std::string& key, double fallback) const;
    bool get_bool(const std::string& key, bool fallback) const;
    std::vector<int> get_int_list(const std::string& key, const std::vector<int>& fallback) const;

    const std::map<std::string, std::string>& values() const { return values_; }
    /// Sorted `key = value` lines.
    std::string to_text() const;

private:
    std::map<std::string, std::string> values_;
};

struct DetectorConfig {
    int num_keypoints = 10;
    int base_channels = 32;
    int depth = 5;
    int max_channels = 1024;
    // Heatmap grid side = input side / scale_factor.
    int scale_factor = 4;
    double temperature = 0.1;
    double variance = 0.01;

    void validate() const;
    void read(const KeyValueConfig& kv);
    void write(KeyValueConfig& kv) const;
};

struct MaskConfig {
    MaskVariant variant = MaskVariant::Heatmap;
    // Zero-out threshold applied after min-max rescaling; 0 disables it.
    double threshold = 0.0;

    void read(const KeyValueConfig& kv);
    void write(KeyValueConfig& kv) const;
};

struct GeneratorConfig {
    int base_channels = 64;
    int n_residual_blocks = 6;
    int highres_depth = 5;
    int input_side = 256;
    int lowres_side = 64;
    int max_channels = 512;

    void validate() const;
    void read(const KeyValueConfig& kv);
    void write(KeyValueConfig& kv) const;
};

struct ExtractorConfig {
    // "vgg19" (pretrained weights file) or "mini" (seeded random weights).
    std::string kind = "vgg19";
    std::filesystem::path weights_path;
    bool allow_untrained = false;
    std::vector<int> stage_channels{64, 128, 256, 512, 512};
    std::vector<int> stage_convs{2, 2, 4, 4, 4};
    std::uint64_t seed = 7;
    std::vector<int> pyramid_scales{256, 128, 64, 32};

    static ExtractorConfig miniature(int stages = 5);

    void read(const KeyValueConfig& kv);
    void write(KeyValueConfig& kv) const;
};

struct TrainConfig {
    int steps = 1000;
    int batch_size = 4;
    double learning_rate = 2e-4;
    double beta1 = 0.5;
    double beta2 = 0.999;
    DetectorMode detector_mode = DetectorMode::Frozen;
    std::filesystem::path detector_checkpoint;
    std::uint64_t seed = 0;
    int checkpoint_every = 100;
    std::filesystem::path output_dir = "run";
    std::filesystem::path data_root;

    void validate() const;
    void read(const KeyValueConfig& kv);
    void write(KeyValueConfig& kv) const;
};

/// Everything needed to rebuild the models; snapshotted into checkpoints.
struct ModelConfig {
    DetectorConfig detector;
    GeneratorConfig generator;
    MaskConfig mask;
    ExtractorConfig extractor;

    void read(const KeyValueConfig& kv);
    void write(KeyValueConfig& kv) const;
};

}  // namespace kpmask
