#include "kpmask/config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>

#include <fmt/format.h>

#include "kpmask/error.hpp"

namespace kpmask {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

template <typename T>
T parse_number(const std::string& key, const std::string& text) {
    T value{};
    const char* first = text.data();
    const char* last = text.data() + text.size();
    auto [ptr, ec] = std::from_chars(first, last, value);
    if (ec != std::errc() || ptr != last) {
        fail(ErrorCategory::InvalidArgument, fmt::format("config key '{}': cannot parse '{}'", key, text));
    }
    return value;
}

std::string format_double(double v) { return fmt::format("{}", v); }

std::string join(const std::vector<int>& values) {
    std::string out;
    for (std::size_t i = 0; i < values.size(); ++i) out += (i ? "," : "") + std::to_string(values[i]);
    return out;
}

}  // namespace

std::string to_string(MaskVariant v) { return v == MaskVariant::Heatmap ? "heatmap" : "circles"; }
std::string to_string(TransferMode m) { return m == TransferMode::Absolute ? "absolute" : "relative"; }
std::string to_string(DetectorMode m) { return m == DetectorMode::Frozen ? "frozen" : "finetune"; }

MaskVariant parse_mask_variant(const std::string& s) {
    if (s == "heatmap") return MaskVariant::Heatmap;
    if (s == "circles") return MaskVariant::Circles;
    fail(ErrorCategory::InvalidArgument, fmt::format("unknown mask variant '{}' (heatmap|circles)", s));
}

TransferMode parse_transfer_mode(const std::string& s) {
    if (s == "absolute") return TransferMode::Absolute;
    if (s == "relative") return TransferMode::Relative;
    fail(ErrorCategory::InvalidArgument, fmt::format("unknown transfer mode '{}' (absolute|relative)", s));
}

DetectorMode parse_detector_mode(const std::string& s) {
    if (s == "frozen") return DetectorMode::Frozen;
    if (s == "finetune") return DetectorMode::Finetune;
    fail(ErrorCategory::InvalidArgument, fmt::format("unknown detector mode '{}' (frozen|finetune)", s));
}

KeyValueConfig KeyValueConfig::parse(const std::string& text) {
    KeyValueConfig kv;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            fail(ErrorCategory::InvalidArgument, fmt::format("config line {}: expected 'key = value'", lineno));
        }
        const std::string key = trim(line.substr(0, eq));
        if (key.empty()) fail(ErrorCategory::InvalidArgument, fmt::format("config line {}: empty key", lineno));
        kv.values_[key] = trim(line.substr(eq + 1));
    }
    return kv;
}

KeyValueConfig KeyValueConfig::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) fail(ErrorCategory::NotFound, fmt::format("config file '{}' not found", path.string()));
    std::stringstream buffer;
    buffer << in.rdbuf();
    return parse(buffer.str());
}

void KeyValueConfig::apply_override(const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0) {
        fail(ErrorCategory::UsageError, fmt::format("override '{}' is not key=value", assignment));
    }
    values_[trim(assignment.substr(0, eq))] = trim(assignment.substr(eq + 1));
}

void KeyValueConfig::merge(const KeyValueConfig& other) {
    for (const auto& [k, v] : other.values_) values_[k] = v;
}

std::optional<std::string> KeyValueConfig::find(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end()) return std::nullopt;
    return it->second;
}

std::string KeyValueConfig::get_string(const std::string& key, const std::string& fallback) const {
    return find(key).value_or(fallback);
}

int KeyValueConfig::get_int(const std::string& key, int fallback) const {
    auto v = find(key);
    return v ? parse_number<int>(key, *v) : fallback;
}

std::int64_t KeyValueConfig::get_int64(const std::string& key, std::int64_t fallback) const {
    auto v = find(key);
    return v ? parse_number<std::int64_t>(key, *v) : fallback;
}

double KeyValueConfig::get_double(const std::string& key, double fallback) const {
    auto v = find(key);
    return v ? parse_number<double>(key, *v) : fallback;
}

bool KeyValueConfig::get_bool(const std::string& key, bool fallback) const {
    auto v = find(key);
    if (!v) return fallback;
    if (*v == "true" || *v == "1" || *v == "yes" || *v == "on") return true;
    if (*v == "false" || *v == "0" || *v == "no" || *v == "off") return false;
    fail(ErrorCategory::InvalidArgument, fmt::format("config key '{}': '{}' is not a boolean", key, *v));
}

std::vector<int> KeyValueConfig::get_int_list(const std::string& key, const std::vector<int>& fallback) const {
    auto v = find(key);
    if (!v) return fallback;
    std::vector<int> out;
    std::stringstream ss(*v);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(parse_number<int>(key, trim(item)));
    return out;
}

std::string KeyValueConfig::to_text() const {
    std::string out;
    for (const auto& [k, v] : values_) out += k + " = " + v + "\n";
    return out;
}

void DetectorConfig::validate() const {
    if (num_keypoints < 1) fail(ErrorCategory::ConfigMismatch, "detector.num_keypoints must be >= 1");
    if (depth < 1 || base_channels < 1 || max_channels < 1 || scale_factor < 1) {
        fail(ErrorCategory::ConfigMismatch, "detector widths, depth and scale_factor must be positive");
    }
    if (!(temperature > 0.0)) fail(ErrorCategory::InvalidTemperature, "detector.temperature must be > 0");
    if (!(variance > 0.0)) fail(ErrorCategory::InvalidVariance, "detector.variance must be > 0");
}

void DetectorConfig::read(const KeyValueConfig& kv) {
    num_keypoints = kv.get_int("detector.num_keypoints", num_keypoints);
    base_channels = kv.get_int("detector.base_channels", base_channels);
    depth = kv.get_int("detector.depth", depth);
    max_channels = kv.get_int("detector.max_channels", max_channels);
    scale_factor = kv.get_int("detector.scale_factor", scale_factor);
    temperature = kv.get_double("detector.temperature", temperature);
    variance = kv.get_double("detector.variance", variance);
}

void DetectorConfig::write(KeyValueConfig& kv) const {
    kv.set("detector.num_keypoints", std::to_string(num_keypoints));
    kv.set("detector.base_channels", std::to_string(base_channels));
    kv.set("detector.depth", std::to_string(depth));
    kv.set("detector.max_channels", std::to_string(max_channels));
    kv.set("detector.scale_factor", std::to_string(scale_factor));
    kv.set("detector.temperature", format_double(temperature));
    kv.set("detector.variance", format_double(variance));
}

void MaskConfig::read(const KeyValueConfig& kv) {
    variant = parse_mask_variant(kv.get_string("mask.variant", to_string(variant)));
    threshold = kv.get_double("mask.threshold", threshold);
}

void MaskConfig::write(KeyValueConfig& kv) const {
    kv.set("mask.variant", to_string(variant));
    kv.set("mask.threshold", format_double(threshold));
}

void GeneratorConfig::validate() const {
    if (n_residual_blocks < 1) fail(ErrorCategory::ConfigMismatch, "generator.residual_blocks must be >= 1");
    if (highres_depth < 1) fail(ErrorCategory::ConfigMismatch, "generator.highres_depth must be >= 1");
    if (base_channels < 1 || max_channels < 1) fail(ErrorCategory::ConfigMismatch, "generator widths must be >= 1");
    if (lowres_side < 1 || input_side % lowres_side != 0) {
        fail(ErrorCategory::ShapeMismatch,
             fmt::format("generator.lowres_side {} must divide input_side {}", lowres_side, input_side));
    }
    if (lowres_side * 4 != input_side) {
        fail(ErrorCategory::ShapeMismatch,
             fmt::format("two 2x decoder upsamples map lowres_side {} to {}, not input_side {}", lowres_side,
                         lowres_side * 4, input_side));
    }
    if (input_side % (1 << highres_depth) != 0) {
        fail(ErrorCategory::ShapeMismatch,
             fmt::format("input_side {} is not divisible by 2^{}", input_side, highres_depth));
    }
}

void GeneratorConfig::read(const KeyValueConfig& kv) {
    base_channels = kv.get_int("generator.base_channels", base_channels);
    n_residual_blocks = kv.get_int("generator.residual_blocks", n_residual_blocks);
    highres_depth = kv.get_int("generator.highres_depth", highres_depth);
    input_side = kv.get_int("generator.input_side", input_side);
    lowres_side = kv.get_int("generator.lowres_side", lowres_side);
    max_channels = kv.get_int("generator.max_channels", max_channels);
}

void GeneratorConfig::write(KeyValueConfig& kv) const {
    kv.set("generator.base_channels", std::to_string(base_channels));
    kv.set("generator.residual_blocks", std::to_string(n_residual_blocks));
    kv.set("generator.highres_depth", std::to_string(highres_depth));
    kv.set("generator.input_side", std::to_string(input_side));
    kv.set("generator.lowres_side", std::to_string(lowres_side));
    kv.set("generator.max_channels", std::to_string(max_channels));
}

ExtractorConfig ExtractorConfig::miniature(int stages) {
    ExtractorConfig c;
    c.kind = "mini";
    const std::vector<int> widths{8, 16, 16, 32, 32};
    c.stage_channels.assign(widths.begin(), widths.begin() + std::clamp(stages, 1, 5));
    c.stage_convs.assign(c.stage_channels.size(), 1);
    return c;
}

void ExtractorConfig::read(const KeyValueConfig& kv) {
    kind = kv.get_string("loss.extractor", kind);
    if (kind == "mini") {
        const ExtractorConfig mini = miniature();
        stage_channels = mini.stage_channels;
        stage_convs = mini.stage_convs;
    } else if (kind != "vgg19") {
        fail(ErrorCategory::InvalidArgument, fmt::format("unknown extractor '{}' (vgg19|mini)", kind));
    }
    weights_path = kv.get_string("loss.extractor_weights", weights_path.string());
    allow_untrained = kv.get_bool("loss.allow_untrained_extractor", allow_untrained);
    stage_channels = kv.get_int_list("loss.stage_channels", stage_channels);
    stage_convs = kv.get_int_list("loss.stage_convs", stage_convs);
    seed = static_cast<std::uint64_t>(kv.get_int64("loss.seed", static_cast<std::int64_t>(seed)));
    pyramid_scales = kv.get_int_list("loss.scales", pyramid_scales);
    if (stage_channels.size() != stage_convs.size() || stage_channels.empty()) {
        fail(ErrorCategory::ConfigMismatch, "loss.stage_channels and loss.stage_convs must be equal-length lists");
    }
}

void ExtractorConfig::write(KeyValueConfig& kv) const {
    kv.set("loss.extractor", kind);
    kv.set("loss.extractor_weights", weights_path.string());
    kv.set("loss.allow_untrained_extractor", allow_untrained ? "true" : "false");
    kv.set("loss.stage_channels", join(stage_channels));
    kv.set("loss.stage_convs", join(stage_convs));
    kv.set("loss.seed", std::to_string(seed));
    kv.set("loss.scales", join(pyramid_scales));
}

void TrainConfig::validate() const {
    if (steps < 1) fail(ErrorCategory::InvalidArgument, "train.steps must be >= 1");
    if (batch_size < 1) fail(ErrorCategory::InvalidArgument, "train.batch_size must be >= 1");
    if (!(learning_rate > 0.0)) fail(ErrorCategory::InvalidArgument, "train.learning_rate must be > 0");
    if (checkpoint_every < 1) fail(ErrorCategory::InvalidArgument, "train.checkpoint_every must be >= 1");
}

void TrainConfig::read(const KeyValueConfig& kv) {
    steps = kv.get_int("train.steps", steps);
    batch_size = kv.get_int("train.batch_size", batch_size);
    learning_rate = kv.get_double("train.learning_rate", learning_rate);
    beta1 = kv.get_double("train.beta1", beta1);
    beta2 = kv.get_double("train.beta2", beta2);
    detector_mode = parse_detector_mode(kv.get_string("train.detector_mode", to_string(detector_mode)));
    detector_checkpoint = kv.get_string("train.detector_checkpoint", detector_checkpoint.string());
    seed = static_cast<std::uint64_t>(kv.get_int64("train.seed", static_cast<std::int64_t>(seed)));
    checkpoint_every = kv.get_int("train.checkpoint_every", checkpoint_every);
    output_dir = kv.get_string("train.output_dir", output_dir.string());
    data_root = kv.get_string("train.data_root", data_root.string());
}

void TrainConfig::write(KeyValueConfig& kv) const {
    kv.set("train.steps", std::to_string(steps));
    kv.set("train.batch_size", std::to_string(batch_size));
    kv.set("train.learning_rate", format_double(learning_rate));
    kv.set("train.beta1", format_double(beta1));
    kv.set("train.beta2", format_double(beta2));
    kv.set("train.detector_mode", to_string(detector_mode));
    kv.set("train.detector_checkpoint", detector_checkpoint.string());
    kv.set("train.seed", std::to_string(seed));
    kv.set("train.checkpoint_every", std::to_string(checkpoint_every));
    kv.set("train.output_dir", output_dir.string());
    kv.set("train.data_root", data_root.string());
}

void ModelConfig::read(const KeyValueConfig& kv) {
    detector.read(kv);
    generator.read(kv);
    mask.read(kv);
    extractor.read(kv);
}

void ModelConfig::write(KeyValueConfig& kv) const {
    detector.write(kv);
    generator.write(kv);
    mask.write(kv);
    extractor.write(kv);
}

}  // namespace kpmask
