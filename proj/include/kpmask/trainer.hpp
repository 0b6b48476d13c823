#pragma once

#include <functional>
#include <map>
#include <memory>

#include "kpmask/checkpoint.hpp"
#include "kpmask/data.hpp"
#include "kpmask/generator.hpp"
#include "kpmask/keypoints.hpp"
#include "kpmask/perceptual.hpp"

namespace kpmask {

/// Detector and generator rebuilt from one configuration.
struct Models {
    ModelConfig config;
    std::unique_ptr<KeypointDetector> detector;
    std::unique_ptr<Generator> generator;

    /// N x 1 x g x g masks for a batch of frames (gradients flow into the
    /// detector only when it is trainable).
    Var masks(const Var& images, bool training) const;
};

/// Adam moments for one parameter list.
class Adam {
public:
    Adam(double beta1, double beta2, double eps = 1e-8) : beta1_(beta1), beta2_(beta2), eps_(eps) {}

    /// One update of every parameter holding a gradient. Names key the
    /// moment buffers, so they must be unique across models.
    void step(const std::vector<NamedParameter>& params, double lr);

    std::uint64_t steps() const { return t_; }
    void export_state(CheckpointFile& file) const;
    void import_state(const CheckpointFile& file, const std::vector<NamedParameter>& params);

private:
    double beta1_;
    double beta2_;
    double eps_;
    std::uint64_t t_ = 0;
    std::map<std::string, std::pair<Tensor, Tensor>> moments_;
};

struct TrainState {
    Models models;
    TrainConfig train;
    std::unique_ptr<FeatureExtractor> extractor;
    Adam optimizer{0.5, 0.999};
    std::uint64_t step = 0;

    /// Parameters updated by the optimizer (generator, plus detector when
    /// finetuning), named with their checkpoint prefixes.
    std::vector<NamedParameter> trainable() const;
};

/// Fresh models. A configured detector checkpoint is loaded; otherwise the
/// detector is randomly initialized.
Models make_models(const ModelConfig& config, std::uint64_t seed,
                   const std::filesystem::path& detector_checkpoint = {});
std::unique_ptr<TrainState> make_train_state(const ModelConfig& model, const TrainConfig& train);

/// One optimizer update on a batch; returns the loss before the update.
/// learning_rate may be 0 (loss only, parameters unchanged).
double train_step(TrainState& state, const std::vector<TrainingPair>& batch);

/// Batch for a given (1-based) step, drawn with a per-step seed so resumed
/// runs see the same pairs.
std::vector<TrainingPair> sample_batch(const VideoDataset& dataset, std::uint64_t seed, std::uint64_t step,
                                       int batch_size);

struct FitCallbacks {
    std::function<void(std::uint64_t step, double loss)> on_step;
};

/// Runs from state.step + 1 to train.steps, appending `step,loss,wall_ms`
/// rows to <output_dir>/loss.csv and writing checkpoint_<step>.kpmk at every
/// multiple of checkpoint_every and at the final step. Returns the last
/// checkpoint path.
std::filesystem::path fit(TrainState& state, const VideoDataset& dataset, const FitCallbacks& callbacks = {});

std::filesystem::path checkpoint_path(const std::filesystem::path& dir, std::uint64_t step);

void save_checkpoint(const TrainState& state, const std::filesystem::path& path);
/// expected, when given, must agree with the stored model config
/// (ConfigMismatch otherwise).
std::unique_ptr<TrainState> load_checkpoint(const std::filesystem::path& path,
                                            const ModelConfig* expected = nullptr);
/// Detector and generator only, for inference.
Models load_models(const std::filesystem::path& path);

/// Eval-mode generator outputs for fixed pairs; used to compare model states.
Tensor probe_outputs(const Models& models, const std::vector<TrainingPair>& pairs);

}  // namespace kpmask
