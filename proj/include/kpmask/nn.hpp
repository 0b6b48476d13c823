#pragma once

#include <cstdint>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "kpmask/autograd.hpp"

namespace kpmask {

/// Seeded generator whose draws are identical across standard libraries
/// (std::*_distribution output is implementation-defined, so it is avoided).
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
    double normal();
    /// Uniform integer in [0, bound).
    std::uint64_t below(std::uint64_t bound);

private:
    std::mt19937_64 engine_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

/// splitmix64 finalizer; used to derive independent per-step seeds.
std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b);

struct NamedParameter {
    std::string name;
    Var var;
};

struct NamedBuffer {
    std::string name;
    std::shared_ptr<Tensor> tensor;
};

/// Ordered registry of a model's trainable parameters and persistent buffers.
class ParameterSet {
public:
    Var add_parameter(const std::string& name, Tensor init);
    std::shared_ptr<Tensor> add_buffer(const std::string& name, Tensor init);

    std::vector<NamedParameter>& parameters() { return parameters_; }
    const std::vector<NamedParameter>& parameters() const { return parameters_; }
    const std::vector<NamedBuffer>& buffers() const { return buffers_; }

    /// Frozen parameters stop collecting gradients; inputs still receive them.
    void set_trainable(bool trainable);
    bool trainable() const { return trainable_; }
    void zero_grad();
    std::size_t parameter_count() const;

private:
    std::vector<NamedParameter> parameters_;
    std::vector<NamedBuffer> buffers_;
    bool trainable_ = true;
};

class Conv2d {
public:
    Conv2d() = default;
    Conv2d(ParameterSet& params, const std::string& name, int in_channels, int out_channels, int kernel, bool bias,
           Rng& rng);

    Var operator()(const Var& x) const;
    int out_channels() const { return out_channels_; }

private:
    Var weight_;
    Var bias_;
    bool has_bias_ = false;
    int out_channels_ = 0;
};

class BatchNorm2d {
public:
    BatchNorm2d() = default;
    BatchNorm2d(ParameterSet& params, const std::string& name, int channels);

    Var operator()(const Var& x, bool training) const;

private:
    Var gamma_;
    Var beta_;
    std::shared_ptr<Tensor> running_mean_;
    std::shared_ptr<Tensor> running_var_;
};

struct HourglassConfig {
    int in_channels = 3;
    int base_channels = 32;
    int depth = 5;
    int max_channels = 1024;
};

/// Encoder-decoder with per-level skip concatenation (U-Net). Encoder blocks
/// are conv3x3-BN-ReLU-avgpool2, decoder blocks upsample2-conv3x3-BN-ReLU.
/// The output concatenates the last decoder block with the raw input, so it
/// has base_channels + in_channels channels at the input resolution.
class Hourglass {
public:
    Hourglass() = default;
    Hourglass(ParameterSet& params, const std::string& name, const HourglassConfig& config, Rng& rng);

    Var operator()(const Var& x, bool training) const;
    int out_channels() const { return config_.base_channels + config_.in_channels; }
    const HourglassConfig& config() const { return config_; }

private:
    struct Block {
        Conv2d conv;
        BatchNorm2d norm;
    };
    HourglassConfig config_;
    std::vector<Block> down_;
    std::vector<Block> up_;
};

}  // namespace kpmask
