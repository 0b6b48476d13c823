#pragma once

// Versioned binary container shared by detector files and training
// checkpoints. All integers and doubles are little-endian.
//
//   magic "KPMK" | u32 format_version
//   u32 K | u32 grid | f64 temperature | f64 variance
//   u64 step
//   u32 len | config text (key = value lines)
//   u32 blob count, then per blob: u32 len | name | 4 x u32 dims | f64 values
//   u64 FNV-1a of every preceding byte | magic "KEND"

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "kpmask/nn.hpp"
#include "kpmask/tensor.hpp"

namespace kpmask {

inline constexpr std::uint32_t kCheckpointFormatVersion = 1;

struct CheckpointHeader {
    std::uint32_t format_version = kCheckpointFormatVersion;
    std::uint32_t num_keypoints = 0;
    std::uint32_t grid = 0;
    double temperature = 0.0;
    double variance = 0.0;
    std::uint64_t step = 0;
};

struct CheckpointFile {
    CheckpointHeader header;
    std::string config_text;
    std::vector<std::pair<std::string, Tensor>> blobs;

    const Tensor* find(const std::string& name) const;
    void add(std::string name, Tensor value) { blobs.emplace_back(std::move(name), std::move(value)); }
};

void write_checkpoint_file(const std::filesystem::path& path, const CheckpointFile& file);
/// Missing file -> NotFound; bad magic, version, checksum or truncation ->
/// UnsupportedCheckpoint.
CheckpointFile read_checkpoint_file(const std::filesystem::path& path);

/// Appends parameters and buffers as `<prefix><name>` blobs.
void export_parameters(const ParameterSet& params, const std::string& prefix, CheckpointFile& file);
/// Restores every parameter and buffer; a missing or mis-shaped blob is a
/// ConfigMismatch.
void import_parameters(ParameterSet& params, const std::string& prefix, const CheckpointFile& file);

}  // namespace kpmask
