#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "kpmask/tensor.hpp"

namespace kpmask {

/// One RGB image as a 1 x 3 x H x W tensor with values in [0, 1].
struct Frame {
    Tensor pixels;
    std::string source_id;
    int index = 0;

    int height() const { return pixels.shape().h; }
    int width() const { return pixels.shape().w; }
};

using FrameSequence = std::vector<Frame>;

/// Decodes an 8- or 16-bit image as RGB in [0, 1]; nullopt if undecodable.
std::optional<Tensor> decode_image(const std::filesystem::path& path);
Tensor read_image(const std::filesystem::path& path);

/// Writes a 1- or 3-channel image (first batch entry) as an 8-bit PNG,
/// clipping to [0, 1] and rounding to the nearest level.
void write_png(const std::filesystem::path& path, const Tensor& image);

/// Rescales each channel to [0, 1] by its own min and max (constant -> 0).
Tensor normalize_for_display(const Tensor& plane);

/// Resamples a 1 x C x H x W image. Area averaging when shrinking, bilinear
/// when enlarging; constant images stay constant either way.
Tensor resize_image(const Tensor& image, int height, int width);

}  // namespace kpmask
