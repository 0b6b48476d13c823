#pragma once

#include <filesystem>
#include <ostream>
#include <string>
#include <vector>

namespace kpmask {

/// Environment variable naming the default config file.
inline constexpr const char* kConfigEnv = "KPMASK_CONFIG";

/// Runs one command line (args exclude the program name). Returns the exit
/// code: 0 success, 1 module error, 2 usage error. Failures end with a single
/// `ERROR <Category>: <message>` line on `err`.
int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// Mask renderings for one frame: channel_XX.png (pre-softmax, display
/// normalized), heatmap_mask.png, gaussian_XX.png, circles_mask.png, plus
/// keypoints.csv. Returns the PNG paths in write order.
std::vector<std::filesystem::path> export_masks(const std::filesystem::path& frame_path,
                                                const std::filesystem::path& detector_path,
                                                const std::filesystem::path& out_dir);

}  // namespace kpmask
