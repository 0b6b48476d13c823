#include "kpmask/trainer.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <sstream>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "kpmask/error.hpp"
#include "kpmask/ops.hpp"

namespace kpmask {

namespace fs = std::filesystem;

Var Models::masks(const Var& images, bool training) const {
    const Var heatmaps = detector->forward(images, training && !detector->frozen());
    return build_masks(heatmaps, detector->config(), config.mask);
}

void Adam::step(const std::vector<NamedParameter>& params, double lr) {
    ++t_;
    const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (const NamedParameter& p : params) {
        if (!p.var.has_grad()) continue;
        auto [it, inserted] = moments_.try_emplace(p.name);
        auto& [m, v] = it->second;
        if (inserted) {
            m = Tensor(p.var.shape());
            v = Tensor(p.var.shape());
        }
        const Tensor& g = p.var.grad();
        Tensor& value = const_cast<Var&>(p.var).mutable_value();
        const std::size_t n = value.size();
        for (std::size_t i = 0; i < n; ++i) {
            m[i] = beta1_ * m[i] + (1.0 - beta1_) * g[i];
            v[i] = beta2_ * v[i] + (1.0 - beta2_) * g[i] * g[i];
            value[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps_);
        }
    }
}

void Adam::export_state(CheckpointFile& file) const {
    Tensor t(Shape{1, 1, 1, 1}, static_cast<double>(t_));
    file.add("adam.t", t);
    for (const auto& [name, mv] : moments_) {
        file.add("adam.m." + name, mv.first);
        file.add("adam.v." + name, mv.second);
    }
}

void Adam::import_state(const CheckpointFile& file, const std::vector<NamedParameter>& params) {
    moments_.clear();
    const Tensor* t = file.find("adam.t");
    t_ = t ? static_cast<std::uint64_t>((*t)[0]) : 0;
    for (const NamedParameter& p : params) {
        const Tensor* m = file.find("adam.m." + p.name);
        const Tensor* v = file.find("adam.v." + p.name);
        if (m == nullptr || v == nullptr) continue;
        if (m->shape() != p.var.shape() || v->shape() != p.var.shape()) {
            fail(ErrorCategory::ConfigMismatch, fmt::format("optimizer state for '{}' has the wrong shape", p.name));
        }
        moments_[p.name] = {*m, *v};
    }
}

std::vector<NamedParameter> TrainState::trainable() const {
    std::vector<NamedParameter> out;
    for (const NamedParameter& p : models.generator->params().parameters()) out.push_back({"generator." + p.name, p.var});
    if (!models.detector->frozen())
        for (const NamedParameter& p : models.detector->params().parameters())
            out.push_back({"detector." + p.name, p.var});
    return out;
}

Models make_models(const ModelConfig& config, std::uint64_t seed, const fs::path& detector_checkpoint) {
    Models m;
    m.config = config;
    if (!detector_checkpoint.empty()) {
        m.detector = load_pretrained(detector_checkpoint, config.detector.num_keypoints);
        m.config.detector = m.detector->config();
    } else {
        m.detector = std::make_unique<KeypointDetector>(config.detector, mix_seed(seed, 11));
    }
    m.generator = std::make_unique<Generator>(config.generator, mix_seed(seed, 12));
    if (m.detector->grid_for(config.generator.input_side) != config.generator.lowres_side) {
        fail(ErrorCategory::ConfigMismatch,
             fmt::format("detector grid {} differs from generator.lowres_side {}",
                         m.detector->grid_for(config.generator.input_side), config.generator.lowres_side));
    }
    return m;
}

std::unique_ptr<TrainState> make_train_state(const ModelConfig& model, const TrainConfig& train) {
    auto state = std::make_unique<TrainState>();
    state->models = make_models(model, train.seed, train.detector_checkpoint);
    if (train.detector_checkpoint.empty() && train.detector_mode == DetectorMode::Frozen) {
        spdlog::warn("frozen detector without a detector checkpoint: keypoints come from random weights");
    }
    state->models.detector->set_frozen(train.detector_mode == DetectorMode::Frozen);
    state->train = train;
    state->extractor = load_extractor(model.extractor);
    state->optimizer = Adam(train.beta1, train.beta2);
    return state;
}

double train_step(TrainState& state, const std::vector<TrainingPair>& batch) {
    if (batch.empty()) fail(ErrorCategory::InvalidArgument, "empty training batch");
    const Models& models = state.models;
    models.generator->params().zero_grad();
    models.detector->params().zero_grad();

    const int n = static_cast<int>(batch.size());
    std::vector<Tensor> images;
    std::vector<Tensor> drivings;
    for (const TrainingPair& p : batch) images.push_back(p.source.pixels);
    for (const TrainingPair& p : batch) {
        images.push_back(p.driving.pixels);
        drivings.push_back(p.driving.pixels);
    }
    const Tensor all = concat_batch(images);
    const Var masks = models.masks(Var(all), true);
    const Var source_masks = ops::slice_batch(masks, 0, n);
    const Var driving_masks = ops::slice_batch(masks, n, 2 * n);
    const Var sources(all.slice_batch(0, n));
    const Var pred = models.generator->forward(sources, source_masks, driving_masks, true);
    const Var loss = pyramid_loss(pred, Var(concat_batch(drivings)), *state.extractor);

    const double value = loss.item();
    if (!std::isfinite(value)) {
        std::ostringstream dump;
        dump << fmt::format("loss {} at step {}; pairs:", value, state.step + 1);
        for (const TrainingPair& p : batch)
            dump << fmt::format(" {}[{}->{}]", p.source.source_id, p.source.index, p.driving.index);
        dump << fmt::format("; prediction finite: {}; masks finite: {}", pred.value().all_finite(),
                            masks.value().all_finite());
        spdlog::error("{}", dump.str());
        fail(ErrorCategory::NonFiniteLoss, dump.str());
    }
    backward(loss);
    state.optimizer.step(state.trainable(), state.train.learning_rate);
    models.generator->params().zero_grad();
    models.detector->params().zero_grad();
    ++state.step;
    return value;
}

std::vector<TrainingPair> sample_batch(const VideoDataset& dataset, std::uint64_t seed, std::uint64_t step,
                                       int batch_size) {
    std::vector<TrainingPair> batch;
    const std::uint64_t step_seed = mix_seed(seed, step);
    for (int b = 0; b < batch_size; ++b)
        batch.push_back(sample_training_pair(dataset, mix_seed(step_seed, static_cast<std::uint64_t>(b))));
    return batch;
}

fs::path checkpoint_path(const fs::path& dir, std::uint64_t step) {
    return dir / fmt::format("checkpoint_{:07d}.kpmk", step);
}

namespace {

// Keeps the header and rows up to `step` so a resumed run continues the log
// without duplicates.
void prepare_loss_log(const fs::path& path, std::uint64_t step) {
    std::vector<std::string> kept;
    if (step > 0 && fs::exists(path)) {
        std::ifstream in(path);
        std::string line;
        std::getline(in, line);
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            if (std::stoull(line.substr(0, line.find(','))) <= step) kept.push_back(line);
        }
    }
    std::ofstream out(path, std::ios::trunc);
    if (!out) fail(ErrorCategory::IoError, fmt::format("cannot write '{}'", path.string()));
    out << "step,loss,wall_ms\n";
    for (const std::string& l : kept) out << l << '\n';
}

}  // namespace

fs::path fit(TrainState& state, const VideoDataset& dataset, const FitCallbacks& callbacks) {
    const TrainConfig& cfg = state.train;
    cfg.validate();
    const int side = state.models.config.generator.input_side;
    for (const Video& v : dataset.videos)
        for (const Frame& f : v.frames)
            if (f.height() != side || f.width() != side) {
                fail(ErrorCategory::ShapeMismatch,
                     fmt::format("video '{}' has {}x{} frames, the generator needs {}", v.id, f.height(), f.width(), side));
            }
    fs::create_directories(cfg.output_dir);
    const fs::path log_path = cfg.output_dir / "loss.csv";
    prepare_loss_log(log_path, state.step);
    std::ofstream log(log_path, std::ios::app);

    fs::path last;
    const auto total = static_cast<std::uint64_t>(cfg.steps);
    while (state.step < total) {
        const std::uint64_t s = state.step + 1;
        const auto batch = sample_batch(dataset, cfg.seed, s, cfg.batch_size);
        const auto t0 = std::chrono::steady_clock::now();
        const double loss = train_step(state, batch);
        const double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
        log << fmt::format("{},{:.9g},{:.3f}\n", s, loss, ms) << std::flush;
        if (callbacks.on_step) callbacks.on_step(s, loss);
        const bool periodic = cfg.checkpoint_every > 0 && s % static_cast<std::uint64_t>(cfg.checkpoint_every) == 0;
        if (periodic || s == total) {
            last = checkpoint_path(cfg.output_dir, s);
            save_checkpoint(state, last);
        }
    }
    if (last.empty()) {
        last = checkpoint_path(cfg.output_dir, state.step);
        save_checkpoint(state, last);
    }
    return last;
}

void save_checkpoint(const TrainState& state, const fs::path& path) {
    CheckpointFile file;
    const DetectorConfig& d = state.models.detector->config();
    file.header.num_keypoints = static_cast<std::uint32_t>(d.num_keypoints);
    file.header.grid = static_cast<std::uint32_t>(state.models.config.generator.lowres_side);
    file.header.temperature = d.temperature;
    file.header.variance = d.variance;
    file.header.step = state.step;
    KeyValueConfig kv;
    ModelConfig model = state.models.config;
    model.detector = d;
    model.write(kv);
    state.train.write(kv);
    // The detector weights travel inside this file.
    kv.set("train.detector_checkpoint", "");
    file.config_text = kv.to_text();
    export_parameters(state.models.detector->params(), "detector.", file);
    export_parameters(state.models.generator->params(), "generator.", file);
    state.optimizer.export_state(file);
    write_checkpoint_file(path, file);
}

namespace {

struct LoadedConfig {
    CheckpointFile file;
    ModelConfig model;
    TrainConfig train;
};

LoadedConfig read_config(const fs::path& path) {
    LoadedConfig out{read_checkpoint_file(path), {}, {}};
    const KeyValueConfig kv = KeyValueConfig::parse(out.file.config_text);
    out.model.read(kv);
    out.train.read(kv);
    if (static_cast<int>(out.file.header.num_keypoints) != out.model.detector.num_keypoints) {
        fail(ErrorCategory::UnsupportedCheckpoint,
             fmt::format("'{}': header K={} disagrees with its config K={}", path.string(),
                         out.file.header.num_keypoints, out.model.detector.num_keypoints));
    }
    if (out.file.find("generator.highres.out.weight") == nullptr) {
        fail(ErrorCategory::UnsupportedCheckpoint, fmt::format("'{}' holds no generator", path.string()));
    }
    return out;
}

Models restore_models(const LoadedConfig& loaded) {
    Models m = make_models(loaded.model, 0);
    import_parameters(m.detector->params(), "detector.", loaded.file);
    import_parameters(m.generator->params(), "generator.", loaded.file);
    return m;
}

}  // namespace

std::unique_ptr<TrainState> load_checkpoint(const fs::path& path, const ModelConfig* expected) {
    LoadedConfig loaded = read_config(path);
    if (expected != nullptr) {
        const DetectorConfig& a = expected->detector;
        const DetectorConfig& b = loaded.model.detector;
        if (a.num_keypoints != b.num_keypoints) {
            fail(ErrorCategory::ConfigMismatch,
                 fmt::format("'{}' holds K={}, the configuration asks for K={}", path.string(), b.num_keypoints,
                             a.num_keypoints));
        }
        const GeneratorConfig& g = expected->generator;
        const GeneratorConfig& h = loaded.model.generator;
        if (g.base_channels != h.base_channels || g.n_residual_blocks != h.n_residual_blocks ||
            g.highres_depth != h.highres_depth || g.input_side != h.input_side || g.lowres_side != h.lowres_side ||
            g.max_channels != h.max_channels || a.base_channels != b.base_channels || a.depth != b.depth ||
            a.max_channels != b.max_channels || a.scale_factor != b.scale_factor) {
            fail(ErrorCategory::ConfigMismatch,
                 fmt::format("'{}' was trained with different network dimensions", path.string()));
        }
    }
    auto state = std::make_unique<TrainState>();
    state->models = restore_models(loaded);
    state->train = loaded.train;
    state->models.detector->set_frozen(loaded.train.detector_mode == DetectorMode::Frozen);
    state->extractor = load_extractor(loaded.model.extractor);
    state->optimizer = Adam(loaded.train.beta1, loaded.train.beta2);
    state->optimizer.import_state(loaded.file, state->trainable());
    state->step = loaded.file.header.step;
    return state;
}

Models load_models(const fs::path& path) {
    Models m = restore_models(read_config(path));
    m.detector->set_frozen(true);
    return m;
}

Tensor probe_outputs(const Models& models, const std::vector<TrainingPair>& pairs) {
    NoGradGuard guard;
    const int n = static_cast<int>(pairs.size());
    std::vector<Tensor> images;
    for (const TrainingPair& p : pairs) images.push_back(p.source.pixels);
    for (const TrainingPair& p : pairs) images.push_back(p.driving.pixels);
    const Tensor all = concat_batch(images);
    const Var masks = models.masks(Var(all), false);
    return models.generator
        ->forward(Var(all.slice_batch(0, n)), ops::slice_batch(masks, 0, n), ops::slice_batch(masks, n, 2 * n), false)
        .value();
}

}  // namespace kpmask
