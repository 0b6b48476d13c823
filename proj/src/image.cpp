#include "kpmask/image.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "kpmask/error.hpp"

namespace kpmask {

namespace {

Tensor from_mat(const cv::Mat& decoded) {
    cv::Mat rgb;
    if (decoded.channels() == 1) {
        cv::cvtColor(decoded, rgb, cv::COLOR_GRAY2RGB);
    } else if (decoded.channels() == 4) {
        cv::cvtColor(decoded, rgb, cv::COLOR_BGRA2RGB);
    } else {
        cv::cvtColor(decoded, rgb, cv::COLOR_BGR2RGB);
    }
    // Divide rather than multiply by the reciprocal so stored levels k/255
    // decode to exactly the value that was written.
    const double levels = rgb.depth() == CV_16U ? 65535.0 : 255.0;
    cv::Mat f;
    rgb.convertTo(f, CV_64FC3);
    Tensor out(Shape{1, 3, f.rows, f.cols});
    for (int y = 0; y < f.rows; ++y) {
        const auto* row = f.ptr<cv::Vec3d>(y);
        for (int x = 0; x < f.cols; ++x)
            for (int c = 0; c < 3; ++c) out.at(0, c, y, x) = row[x][c] / levels;
    }
    return out;
}

}  // namespace

std::optional<Tensor> decode_image(const std::filesystem::path& path) {
    cv::Mat decoded = cv::imread(path.string(), cv::IMREAD_UNCHANGED);
    if (decoded.empty()) return std::nullopt;
    if (decoded.depth() != CV_8U && decoded.depth() != CV_16U) return std::nullopt;
    return from_mat(decoded);
}

Tensor read_image(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path)) fail(ErrorCategory::NotFound, fmt::format("image '{}' not found", path.string()));
    auto img = decode_image(path);
    if (!img) fail(ErrorCategory::IoError, fmt::format("cannot decode image '{}'", path.string()));
    return *std::move(img);
}

void write_png(const std::filesystem::path& path, const Tensor& image) {
    const Shape& s = image.shape();
    if (s.c != 1 && s.c != 3) {
        fail(ErrorCategory::ShapeMismatch, fmt::format("PNG export needs 1 or 3 channels, got {}", s.str()));
    }
    cv::Mat mat(s.h, s.w, s.c == 1 ? CV_8UC1 : CV_8UC3);
    auto level = [](double v) { return static_cast<unsigned char>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0)); };
    for (int y = 0; y < s.h; ++y) {
        unsigned char* row = mat.ptr<unsigned char>(y);
        for (int x = 0; x < s.w; ++x) {
            if (s.c == 1) {
                row[x] = level(image.at(0, 0, y, x));
            } else {
                // OpenCV stores BGR.
                row[3 * x + 0] = level(image.at(0, 2, y, x));
                row[3 * x + 1] = level(image.at(0, 1, y, x));
                row[3 * x + 2] = level(image.at(0, 0, y, x));
            }
        }
    }
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    if (!cv::imwrite(path.string(), mat)) fail(ErrorCategory::IoError, fmt::format("cannot write '{}'", path.string()));
}

Tensor normalize_for_display(const Tensor& plane) {
    Tensor out(plane.shape());
    const Shape& s = plane.shape();
    for (int n = 0; n < s.n; ++n)
        for (int c = 0; c < s.c; ++c) {
            const double* p = plane.plane_ptr(n, c);
            const auto [lo, hi] = std::minmax_element(p, p + s.plane());
            const double range = *hi - *lo;
            double* o = out.plane_ptr(n, c);
            for (std::size_t i = 0; i < s.plane(); ++i) o[i] = range > 0.0 ? (p[i] - *lo) / range : 0.0;
        }
    return out;
}

Tensor resize_image(const Tensor& image, int height, int width) {
    const Shape& s = image.shape();
    if (s.h == height && s.w == width) return image;
    const int interpolation = (height <= s.h && width <= s.w) ? cv::INTER_AREA : cv::INTER_LINEAR;
    Tensor out(Shape{s.n, s.c, height, width});
    for (int n = 0; n < s.n; ++n)
        for (int c = 0; c < s.c; ++c) {
            cv::Mat src(s.h, s.w, CV_64FC1, const_cast<double*>(image.plane_ptr(n, c)));
            cv::Mat dst(height, width, CV_64FC1, out.plane_ptr(n, c));
            cv::resize(src, dst, cv::Size(width, height), 0, 0, interpolation);
        }
    return out;
}

}  // namespace kpmask
