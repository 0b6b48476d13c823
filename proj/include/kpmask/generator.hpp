#pragma once

#include "kpmask/config.hpp"
#include "kpmask/masks.hpp"
#include "kpmask/nn.hpp"

namespace kpmask {

/// Two-stage synthesis: a residual generator at lowres_side followed by a
/// U-Net refiner at input_side.
class Generator {
public:
    Generator(const GeneratorConfig& config, std::uint64_t seed);

    Generator(const Generator&) = delete;
    Generator& operator=(const Generator&) = delete;

    /// N x 3 x L x L source plus two N x 1 x L x L masks -> N x 3 x 4L x 4L in (0, 1).
    Var low_res_generate(const Var& source_small, const Var& source_mask, const Var& driving_mask, bool training) const;
    /// Coarse prediction and source, both at input_side -> refined frame in (0, 1).
    Var high_res_refine(const Var& coarse, const Var& source, bool training) const;
    /// Full pipeline on a batch of sources at input_side.
    Var forward(const Var& source, const Var& source_mask, const Var& driving_mask, bool training) const;

    /// Inference on one frame with running batch-norm statistics.
    Frame synthesize(const Frame& source, const StructuralMask& source_mask, const StructuralMask& driving_mask) const;

    const GeneratorConfig& config() const { return config_; }
    ParameterSet& params() { return params_; }
    const ParameterSet& params() const { return params_; }

private:
    struct Residual {
        BatchNorm2d norm1;
        Conv2d conv1;
        BatchNorm2d norm2;
        Conv2d conv2;
    };

    GeneratorConfig config_;
    ParameterSet params_;
    Conv2d encoder_conv_;
    BatchNorm2d encoder_norm_;
    Conv2d source_conv_;
    BatchNorm2d source_norm_;
    std::vector<Residual> residual_;
    std::vector<BatchNorm2d> decoder_norm_;
    Conv2d lowres_out_;
    Hourglass refiner_;
    Conv2d highres_out_;
};

}  // namespace kpmask
