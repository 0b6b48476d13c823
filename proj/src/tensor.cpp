#include "kpmask/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <fmt/format.h>

#include "kpmask/error.hpp"

namespace kpmask {

std::string Shape::str() const { return fmt::format("[{}x{}x{}x{}]", n, c, h, w); }

Tensor::Tensor(Shape shape, double fill) : shape_(shape), data_(shape.numel(), fill) {}

Tensor::Tensor(Shape shape, std::vector<double> values) : shape_(shape), data_(std::move(values)) {
    if (data_.size() != shape_.numel()) {
        fail(ErrorCategory::ShapeMismatch,
             fmt::format("tensor {} needs {} values, got {}", shape_.str(), shape_.numel(), data_.size()));
    }
}

void Tensor::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

Tensor Tensor::reshaped(Shape shape) const {
    if (shape.numel() != shape_.numel()) {
        fail(ErrorCategory::ShapeMismatch, fmt::format("cannot reshape {} to {}", shape_.str(), shape.str()));
    }
    return Tensor(shape, data_);
}

Tensor Tensor::slice_batch(int begin, int end) const {
    if (begin < 0 || end > shape_.n || begin >= end) {
        fail(ErrorCategory::ShapeMismatch,
             fmt::format("batch slice [{}, {}) out of range for {}", begin, end, shape_.str()));
    }
    Shape out_shape = shape_;
    out_shape.n = end - begin;
    std::vector<double> values(sample_ptr(begin), sample_ptr(begin) + out_shape.numel());
    return Tensor(out_shape, std::move(values));
}

Tensor Tensor::channel(int n, int c) const {
    const double* p = plane_ptr(n, c);
    return Tensor(Shape{1, 1, shape_.h, shape_.w}, std::vector<double>(p, p + shape_.plane()));
}

double Tensor::sum() const {
    double s = 0.0;
    for (double v : data_) s += v;
    return s;
}

double Tensor::min() const {
    return data_.empty() ? std::numeric_limits<double>::quiet_NaN()
                         : *std::min_element(data_.begin(), data_.end());
}

double Tensor::max() const {
    return data_.empty() ? std::numeric_limits<double>::quiet_NaN()
                         : *std::max_element(data_.begin(), data_.end());
}

bool Tensor::all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

Tensor concat_batch(std::span<const Tensor> parts) {
    if (parts.empty()) fail(ErrorCategory::ShapeMismatch, "concat_batch of zero tensors");
    Shape shape = parts[0].shape();
    int total = 0;
    for (const Tensor& t : parts) {
        Shape s = t.shape();
        if (s.c != shape.c || s.h != shape.h || s.w != shape.w) {
            fail(ErrorCategory::ShapeMismatch,
                 fmt::format("concat_batch: {} does not match {}", s.str(), shape.str()));
        }
        total += s.n;
    }
    shape.n = total;
    std::vector<double> values;
    values.reserve(shape.numel());
    for (const Tensor& t : parts) values.insert(values.end(), t.data(), t.data() + t.size());
    return Tensor(shape, std::move(values));
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) {
        fail(ErrorCategory::ShapeMismatch, fmt::format("compare {} vs {}", a.shape().str(), b.shape().str()));
    }
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

}  // namespace kpmask
