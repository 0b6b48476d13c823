#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace kpmask {

/// NCHW extents. Every tensor in the library is four-dimensional; scalars are
/// 1x1x1x1 and keypoint sets are N x K x 1 x 2.
struct Shape {
    int n = 1;
    int c = 1;
    int h = 1;
    int w = 1;

    std::size_t numel() const {
        return static_cast<std::size_t>(n) * static_cast<std::size_t>(c) *
               static_cast<std::size_t>(h) * static_cast<std::size_t>(w);
    }
    std::size_t plane() const { return static_cast<std::size_t>(h) * static_cast<std::size_t>(w); }
    std::size_t sample() const { return static_cast<std::size_t>(c) * plane(); }

    bool operator==(const Shape&) const = default;
    std::string str() const;
};

/// Dense row-major double storage with NCHW indexing.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(Shape shape, double fill = 0.0);
    Tensor(Shape shape, std::vector<double> values);

    static Tensor scalar(double v) { return Tensor(Shape{1, 1, 1, 1}, v); }

    const Shape& shape() const { return shape_; }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    std::span<double> values() { return data_; }
    std::span<const double> values() const { return data_; }

    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }

    double& at(int n, int c, int h, int w) { return data_[offset(n, c, h, w)]; }
    double at(int n, int c, int h, int w) const { return data_[offset(n, c, h, w)]; }

    double* sample_ptr(int n) { return data_.data() + static_cast<std::size_t>(n) * shape_.sample(); }
    const double* sample_ptr(int n) const {
        return data_.data() + static_cast<std::size_t>(n) * shape_.sample();
    }
    double* plane_ptr(int n, int c) { return sample_ptr(n) + static_cast<std::size_t>(c) * shape_.plane(); }
    const double* plane_ptr(int n, int c) const {
        return sample_ptr(n) + static_cast<std::size_t>(c) * shape_.plane();
    }

    void fill(double v);
    /// Same storage, new extents; element count must match.
    Tensor reshaped(Shape shape) const;
    /// Copies samples [begin, end) along the batch axis.
    Tensor slice_batch(int begin, int end) const;
    Tensor channel(int n, int c) const;

    double sum() const;
    double min() const;
    double max() const;
    bool all_finite() const;

    bool operator==(const Tensor& other) const { return shape_ == other.shape_ && data_ == other.data_; }

private:
    std::size_t offset(int n, int c, int h, int w) const {
        return ((static_cast<std::size_t>(n) * shape_.c + c) * shape_.h + h) * shape_.w + w;
    }

    Shape shape_{0, 0, 0, 0};
    std::vector<double> data_;
};

/// Stacks equally shaped tensors along the batch axis.
Tensor concat_batch(std::span<const Tensor> parts);

double max_abs_diff(const Tensor& a, const Tensor& b);

}  // namespace kpmask
