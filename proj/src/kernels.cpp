#include "kpmask/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>

#include <fmt/format.h>

#include "kpmask/error.hpp"

namespace kpmask::kernels {

namespace {

constexpr int kMr = 4;
constexpr int kNr = 16;
constexpr int kKc = 256;
// Upper bound on im2col scratch, in doubles.
constexpr std::size_t kColBudget = std::size_t{1} << 20;

void micro_full(int kc, const double* a, int lda, const double* packed_b, double* c, int ldc) {
    double acc[kMr][kNr] = {};
    for (int k = 0; k < kc; ++k) {
        const double* b = packed_b + static_cast<std::size_t>(k) * kNr;
        for (int r = 0; r < kMr; ++r) {
            const double av = a[static_cast<std::size_t>(r) * lda + k];
#pragma omp simd
            for (int j = 0; j < kNr; ++j) acc[r][j] += av * b[j];
        }
    }
    for (int r = 0; r < kMr; ++r) {
        double* crow = c + static_cast<std::size_t>(r) * ldc;
#pragma omp simd
        for (int j = 0; j < kNr; ++j) crow[j] += acc[r][j];
    }
}

void micro_edge(int mr, int nr, int kc, const double* a, int lda, const double* packed_b, double* c, int ldc) {
    double acc[kMr][kNr] = {};
    for (int k = 0; k < kc; ++k) {
        const double* b = packed_b + static_cast<std::size_t>(k) * kNr;
        for (int r = 0; r < mr; ++r) {
            const double av = a[static_cast<std::size_t>(r) * lda + k];
            for (int j = 0; j < kNr; ++j) acc[r][j] += av * b[j];
        }
    }
    for (int r = 0; r < mr; ++r) {
        for (int j = 0; j < nr; ++j) c[static_cast<std::size_t>(r) * ldc + j] += acc[r][j];
    }
}

void check_conv_shapes(const Tensor& input, const Tensor& weight) {
    const Shape& w = weight.shape();
    if (w.h != w.w || w.h % 2 == 0) {
        fail(ErrorCategory::ShapeMismatch, fmt::format("conv kernel must be odd and square, got {}", w.str()));
    }
    if (input.shape().c != w.c) {
        fail(ErrorCategory::ShapeMismatch,
             fmt::format("conv input {} does not match weight {}", input.shape().str(), w.str()));
    }
}

std::size_t conv_tile(int kdim, int hw) {
    std::size_t tile = std::max<std::size_t>(kNr, kColBudget / static_cast<std::size_t>(kdim));
    tile = (tile / kNr) * kNr;
    return std::min<std::size_t>(tile, static_cast<std::size_t>(hw));
}

// col[(ci, ky, kx), t] = x[ci, y + ky - pad, x + kx - pad] for pixels p0 + t.
void im2col(const double* x, int channels, int height, int width, int kernel, std::size_t p0, std::size_t count,
            double* col) {
    const int pad = kernel / 2;
    const int rows = channels * kernel * kernel;
#pragma omp parallel for schedule(static)
    for (int row = 0; row < rows; ++row) {
        const int ci = row / (kernel * kernel);
        const int ky = (row / kernel) % kernel;
        const int kx = row % kernel;
        const double* plane = x + static_cast<std::size_t>(ci) * height * width;
        double* out = col + static_cast<std::size_t>(row) * count;
        for (std::size_t t = 0; t < count; ++t) {
            const std::size_t p = p0 + t;
            const int yy = static_cast<int>(p / width) + ky - pad;
            const int xx = static_cast<int>(p % width) + kx - pad;
            out[t] = (yy >= 0 && yy < height && xx >= 0 && xx < width)
                         ? plane[static_cast<std::size_t>(yy) * width + xx]
                         : 0.0;
        }
    }
}

// Transposed layout: row[t, (ci, ky, kx)].
void im2row(const double* x, int channels, int height, int width, int kernel, std::size_t p0, std::size_t count,
            double* rowbuf) {
    const int pad = kernel / 2;
    const int kdim = channels * kernel * kernel;
#pragma omp parallel for schedule(static)
    for (std::size_t t = 0; t < count; ++t) {
        const std::size_t p = p0 + t;
        const int y = static_cast<int>(p / width);
        const int xpos = static_cast<int>(p % width);
        double* out = rowbuf + t * kdim;
        for (int ci = 0; ci < channels; ++ci) {
            const double* plane = x + static_cast<std::size_t>(ci) * height * width;
            for (int ky = 0; ky < kernel; ++ky) {
                const int yy = y + ky - pad;
                for (int kx = 0; kx < kernel; ++kx) {
                    const int xx = xpos + kx - pad;
                    *out++ = (yy >= 0 && yy < height && xx >= 0 && xx < width)
                                 ? plane[static_cast<std::size_t>(yy) * width + xx]
                                 : 0.0;
                }
            }
        }
    }
}

void col2im_add(const double* col, int channels, int height, int width, int kernel, std::size_t p0,
                std::size_t count, double* x) {
    const int pad = kernel / 2;
#pragma omp parallel for schedule(static)
    for (int ci = 0; ci < channels; ++ci) {
        double* plane = x + static_cast<std::size_t>(ci) * height * width;
        for (int ky = 0; ky < kernel; ++ky) {
            for (int kx = 0; kx < kernel; ++kx) {
                const int row = (ci * kernel + ky) * kernel + kx;
                const double* in = col + static_cast<std::size_t>(row) * count;
                for (std::size_t t = 0; t < count; ++t) {
                    const std::size_t p = p0 + t;
                    const int yy = static_cast<int>(p / width) + ky - pad;
                    const int xx = static_cast<int>(p % width) + kx - pad;
                    if (yy >= 0 && yy < height && xx >= 0 && xx < width) {
                        plane[static_cast<std::size_t>(yy) * width + xx] += in[t];
                    }
                }
            }
        }
    }
}

}  // namespace

void gemm(int m, int n, int k, const double* a, int lda, const double* b, int ldb, double* c, int ldc) {
    if (m <= 0 || n <= 0 || k <= 0) return;
    const int panels = (n + kNr - 1) / kNr;
#pragma omp parallel
    {
        std::vector<double> packed(static_cast<std::size_t>(kKc) * kNr);
#pragma omp for schedule(static)
        for (int panel = 0; panel < panels; ++panel) {
            const int j0 = panel * kNr;
            const int nr = std::min(kNr, n - j0);
            for (int k0 = 0; k0 < k; k0 += kKc) {
                const int kc = std::min(kKc, k - k0);
                for (int kk = 0; kk < kc; ++kk) {
                    const double* src = b + static_cast<std::size_t>(k0 + kk) * ldb + j0;
                    double* dst = packed.data() + static_cast<std::size_t>(kk) * kNr;
                    int j = 0;
                    for (; j < nr; ++j) dst[j] = src[j];
                    for (; j < kNr; ++j) dst[j] = 0.0;
                }
                for (int i0 = 0; i0 < m; i0 += kMr) {
                    const int mr = std::min(kMr, m - i0);
                    const double* ablock = a + static_cast<std::size_t>(i0) * lda + k0;
                    double* cblock = c + static_cast<std::size_t>(i0) * ldc + j0;
                    if (mr == kMr && nr == kNr) {
                        micro_full(kc, ablock, lda, packed.data(), cblock, ldc);
                    } else {
                        micro_edge(mr, nr, kc, ablock, lda, packed.data(), cblock, ldc);
                    }
                }
            }
        }
    }
}

Tensor conv2d_forward(const Tensor& input, const Tensor& weight, const Tensor* bias) {
    check_conv_shapes(input, weight);
    const Shape& is = input.shape();
    const int cout = weight.shape().n;
    const int kernel = weight.shape().h;
    const int kdim = is.c * kernel * kernel;
    const int hw = is.h * is.w;
    Tensor out(Shape{is.n, cout, is.h, is.w});
    const std::size_t tile = conv_tile(kdim, hw);
    std::vector<double> col(static_cast<std::size_t>(kdim) * tile);
    for (int n = 0; n < is.n; ++n) {
        double* o = out.sample_ptr(n);
        if (bias != nullptr) {
            for (int co = 0; co < cout; ++co) std::fill_n(o + static_cast<std::size_t>(co) * hw, hw, (*bias)[co]);
        }
        for (std::size_t p0 = 0; p0 < static_cast<std::size_t>(hw); p0 += tile) {
            const std::size_t count = std::min(tile, hw - p0);
            im2col(input.sample_ptr(n), is.c, is.h, is.w, kernel, p0, count, col.data());
            gemm(cout, static_cast<int>(count), kdim, weight.data(), kdim, col.data(), static_cast<int>(count),
                 o + p0, hw);
        }
    }
    return out;
}

Tensor conv2d_backward_input(const Tensor& grad_out, const Tensor& weight, const Shape& input_shape) {
    const int cout = weight.shape().n;
    const int kernel = weight.shape().h;
    const int kdim = input_shape.c * kernel * kernel;
    const int hw = input_shape.h * input_shape.w;
    // W^T: [kdim x cout]
    std::vector<double> wt(static_cast<std::size_t>(kdim) * cout);
    for (int co = 0; co < cout; ++co) {
        for (int q = 0; q < kdim; ++q) wt[static_cast<std::size_t>(q) * cout + co] = weight[static_cast<std::size_t>(co) * kdim + q];
    }
    Tensor grad_in(input_shape);
    const std::size_t tile = conv_tile(kdim, hw);
    std::vector<double> col(static_cast<std::size_t>(kdim) * tile);
    for (int n = 0; n < input_shape.n; ++n) {
        for (std::size_t p0 = 0; p0 < static_cast<std::size_t>(hw); p0 += tile) {
            const std::size_t count = std::min(tile, hw - p0);
            std::fill_n(col.data(), static_cast<std::size_t>(kdim) * count, 0.0);
            gemm(kdim, static_cast<int>(count), cout, wt.data(), cout, grad_out.sample_ptr(n) + p0, hw, col.data(),
                 static_cast<int>(count));
            col2im_add(col.data(), input_shape.c, input_shape.h, input_shape.w, kernel, p0, count,
                       grad_in.sample_ptr(n));
        }
    }
    return grad_in;
}

Tensor conv2d_backward_weight(const Tensor& input, const Tensor& grad_out, int kernel) {
    const Shape& is = input.shape();
    const int cout = grad_out.shape().c;
    const int kdim = is.c * kernel * kernel;
    const int hw = is.h * is.w;
    Tensor grad_w(Shape{cout, is.c, kernel, kernel});
    const std::size_t tile = conv_tile(kdim, hw);
    std::vector<double> rows(static_cast<std::size_t>(kdim) * tile);
    for (int n = 0; n < is.n; ++n) {
        for (std::size_t p0 = 0; p0 < static_cast<std::size_t>(hw); p0 += tile) {
            const std::size_t count = std::min(tile, hw - p0);
            im2row(input.sample_ptr(n), is.c, is.h, is.w, kernel, p0, count, rows.data());
            gemm(cout, kdim, static_cast<int>(count), grad_out.sample_ptr(n) + p0, hw, rows.data(), kdim,
                 grad_w.data(), kdim);
        }
    }
    return grad_w;
}

Tensor conv2d_backward_bias(const Tensor& grad_out) {
    const Shape& s = grad_out.shape();
    Tensor grad_b(Shape{s.c, 1, 1, 1});
#pragma omp parallel for schedule(static)
    for (int c = 0; c < s.c; ++c) {
        double acc = 0.0;
        for (int n = 0; n < s.n; ++n) {
            const double* p = grad_out.plane_ptr(n, c);
            for (std::size_t i = 0; i < s.plane(); ++i) acc += p[i];
        }
        grad_b[c] = acc;
    }
    return grad_b;
}

Tensor avg_pool_forward(const Tensor& input, int factor) {
    const Shape& s = input.shape();
    if (factor < 1 || s.h % factor != 0 || s.w % factor != 0) {
        fail(ErrorCategory::ShapeMismatch, fmt::format("avg pool factor {} does not divide {}", factor, s.str()));
    }
    const int oh = s.h / factor;
    const int ow = s.w / factor;
    Tensor out(Shape{s.n, s.c, oh, ow});
    const double scale = 1.0 / (factor * factor);
    const int planes = s.n * s.c;
#pragma omp parallel for schedule(static)
    for (int pl = 0; pl < planes; ++pl) {
        const double* in = input.data() + static_cast<std::size_t>(pl) * s.plane();
        double* o = out.data() + static_cast<std::size_t>(pl) * oh * ow;
        for (int y = 0; y < oh; ++y) {
            for (int x = 0; x < ow; ++x) {
                double acc = 0.0;
                for (int dy = 0; dy < factor; ++dy) {
                    const double* row = in + static_cast<std::size_t>(y * factor + dy) * s.w + x * factor;
                    for (int dx = 0; dx < factor; ++dx) acc += row[dx];
                }
                o[static_cast<std::size_t>(y) * ow + x] = acc * scale;
            }
        }
    }
    return out;
}

Tensor avg_pool_backward(const Tensor& grad_out, int factor) {
    const Shape& s = grad_out.shape();
    Tensor grad_in(Shape{s.n, s.c, s.h * factor, s.w * factor});
    const double scale = 1.0 / (factor * factor);
    const int planes = s.n * s.c;
    const int iw = s.w * factor;
#pragma omp parallel for schedule(static)
    for (int pl = 0; pl < planes; ++pl) {
        const double* g = grad_out.data() + static_cast<std::size_t>(pl) * s.plane();
        double* gi = grad_in.data() + static_cast<std::size_t>(pl) * s.plane() * factor * factor;
        for (int y = 0; y < s.h * factor; ++y) {
            for (int x = 0; x < iw; ++x) {
                gi[static_cast<std::size_t>(y) * iw + x] = g[static_cast<std::size_t>(y / factor) * s.w + x / factor] * scale;
            }
        }
    }
    return grad_in;
}

Tensor max_pool2_forward(const Tensor& input, std::vector<std::size_t>& argmax) {
    const Shape& s = input.shape();
    if (s.h % 2 != 0 || s.w % 2 != 0) {
        fail(ErrorCategory::ShapeMismatch, fmt::format("max pool needs even extents, got {}", s.str()));
    }
    const int oh = s.h / 2;
    const int ow = s.w / 2;
    Tensor out(Shape{s.n, s.c, oh, ow});
    argmax.assign(out.size(), 0);
    const int planes = s.n * s.c;
#pragma omp parallel for schedule(static)
    for (int pl = 0; pl < planes; ++pl) {
        const std::size_t ibase = static_cast<std::size_t>(pl) * s.plane();
        const std::size_t obase = static_cast<std::size_t>(pl) * oh * ow;
        for (int y = 0; y < oh; ++y) {
            for (int x = 0; x < ow; ++x) {
                std::size_t best = ibase + static_cast<std::size_t>(2 * y) * s.w + 2 * x;
                for (int dy = 0; dy < 2; ++dy) {
                    for (int dx = 0; dx < 2; ++dx) {
                        const std::size_t idx = ibase + static_cast<std::size_t>(2 * y + dy) * s.w + 2 * x + dx;
                        if (input[idx] > input[best]) best = idx;
                    }
                }
                out[obase + static_cast<std::size_t>(y) * ow + x] = input[best];
                argmax[obase + static_cast<std::size_t>(y) * ow + x] = best;
            }
        }
    }
    return out;
}

Tensor max_pool2_backward(const Tensor& grad_out, const std::vector<std::size_t>& argmax, const Shape& input_shape) {
    Tensor grad_in(input_shape);
    // Windows do not overlap, so every input index has at most one writer.
    const std::ptrdiff_t count = static_cast<std::ptrdiff_t>(grad_out.size());
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t i = 0; i < count; ++i) grad_in[argmax[i]] += grad_out[i];
    return grad_in;
}

Tensor upsample_nearest_forward(const Tensor& input, int factor) {
    const Shape& s = input.shape();
    const int oh = s.h * factor;
    const int ow = s.w * factor;
    Tensor out(Shape{s.n, s.c, oh, ow});
    const int planes = s.n * s.c;
#pragma omp parallel for schedule(static)
    for (int pl = 0; pl < planes; ++pl) {
        const double* in = input.data() + static_cast<std::size_t>(pl) * s.plane();
        double* o = out.data() + static_cast<std::size_t>(pl) * oh * ow;
        for (int y = 0; y < oh; ++y) {
            const double* row = in + static_cast<std::size_t>(y / factor) * s.w;
            for (int x = 0; x < ow; ++x) o[static_cast<std::size_t>(y) * ow + x] = row[x / factor];
        }
    }
    return out;
}

Tensor upsample_nearest_backward(const Tensor& grad_out, int factor) {
    const Shape& s = grad_out.shape();
    const int ih = s.h / factor;
    const int iw = s.w / factor;
    Tensor grad_in(Shape{s.n, s.c, ih, iw});
    const int planes = s.n * s.c;
#pragma omp parallel for schedule(static)
    for (int pl = 0; pl < planes; ++pl) {
        const double* g = grad_out.data() + static_cast<std::size_t>(pl) * s.plane();
        double* gi = grad_in.data() + static_cast<std::size_t>(pl) * ih * iw;
        for (int y = 0; y < ih; ++y) {
            for (int x = 0; x < iw; ++x) {
                double acc = 0.0;
                for (int dy = 0; dy < factor; ++dy) {
                    const double* row = g + static_cast<std::size_t>(y * factor + dy) * s.w + x * factor;
                    for (int dx = 0; dx < factor; ++dx) acc += row[dx];
                }
                gi[static_cast<std::size_t>(y) * iw + x] = acc;
            }
        }
    }
    return grad_in;
}

Tensor batch_norm_train(const Tensor& input, const Tensor& gamma, const Tensor& beta, double eps,
                        BatchNormSaved& saved) {
    const Shape& s = input.shape();
    const double count = static_cast<double>(s.n) * static_cast<double>(s.plane());
    Tensor out(s);
    saved.normalized = Tensor(s);
    saved.mean.assign(s.c, 0.0);
    saved.inv_std.assign(s.c, 0.0);
#pragma omp parallel for schedule(static)
    for (int c = 0; c < s.c; ++c) {
        double mean = 0.0;
        for (int n = 0; n < s.n; ++n) {
            const double* p = input.plane_ptr(n, c);
            for (std::size_t i = 0; i < s.plane(); ++i) mean += p[i];
        }
        mean /= count;
        double var = 0.0;
        for (int n = 0; n < s.n; ++n) {
            const double* p = input.plane_ptr(n, c);
            for (std::size_t i = 0; i < s.plane(); ++i) var += (p[i] - mean) * (p[i] - mean);
        }
        var /= count;
        const double inv_std = 1.0 / std::sqrt(var + eps);
        saved.mean[c] = mean;
        saved.inv_std[c] = inv_std;
        for (int n = 0; n < s.n; ++n) {
            const double* p = input.plane_ptr(n, c);
            double* xh = saved.normalized.plane_ptr(n, c);
            double* o = out.plane_ptr(n, c);
            for (std::size_t i = 0; i < s.plane(); ++i) {
                xh[i] = (p[i] - mean) * inv_std;
                o[i] = gamma[c] * xh[i] + beta[c];
            }
        }
    }
    return out;
}

Tensor batch_norm_eval(const Tensor& input, const Tensor& gamma, const Tensor& beta, const Tensor& running_mean,
                       const Tensor& running_var, double eps) {
    const Shape& s = input.shape();
    Tensor out(s);
#pragma omp parallel for schedule(static)
    for (int c = 0; c < s.c; ++c) {
        const double scale = gamma[c] / std::sqrt(running_var[c] + eps);
        const double shift = beta[c] - running_mean[c] * scale;
        for (int n = 0; n < s.n; ++n) {
            const double* p = input.plane_ptr(n, c);
            double* o = out.plane_ptr(n, c);
            for (std::size_t i = 0; i < s.plane(); ++i) o[i] = p[i] * scale + shift;
        }
    }
    return out;
}

Tensor batch_norm_backward(const Tensor& grad_out, const Tensor& gamma, const BatchNormSaved& saved,
                           Tensor& grad_gamma, Tensor& grad_beta) {
    const Shape& s = grad_out.shape();
    const double count = static_cast<double>(s.n) * static_cast<double>(s.plane());
    Tensor grad_in(s);
    grad_gamma = Tensor(Shape{s.c, 1, 1, 1});
    grad_beta = Tensor(Shape{s.c, 1, 1, 1});
#pragma omp parallel for schedule(static)
    for (int c = 0; c < s.c; ++c) {
        double sum_dy = 0.0;
        double sum_dy_xh = 0.0;
        for (int n = 0; n < s.n; ++n) {
            const double* g = grad_out.plane_ptr(n, c);
            const double* xh = saved.normalized.plane_ptr(n, c);
            for (std::size_t i = 0; i < s.plane(); ++i) {
                sum_dy += g[i];
                sum_dy_xh += g[i] * xh[i];
            }
        }
        grad_gamma[c] = sum_dy_xh;
        grad_beta[c] = sum_dy;
        const double k = gamma[c] * saved.inv_std[c] / count;
        for (int n = 0; n < s.n; ++n) {
            const double* g = grad_out.plane_ptr(n, c);
            const double* xh = saved.normalized.plane_ptr(n, c);
            double* gi = grad_in.plane_ptr(n, c);
            for (std::size_t i = 0; i < s.plane(); ++i) gi[i] = k * (count * g[i] - sum_dy - xh[i] * sum_dy_xh);
        }
    }
    return grad_in;
}

Tensor spatial_softmax_forward(const Tensor& logits, double temperature) {
    if (!(temperature > 0.0)) {
        fail(ErrorCategory::InvalidTemperature, fmt::format("softmax temperature must be > 0, got {}", temperature));
    }
    const Shape& s = logits.shape();
    Tensor out(s);
    const int planes = s.n * s.c;
    const std::size_t plane = s.plane();
#pragma omp parallel for schedule(static)
    for (int pl = 0; pl < planes; ++pl) {
        const double* x = logits.data() + static_cast<std::size_t>(pl) * plane;
        double* p = out.data() + static_cast<std::size_t>(pl) * plane;
        double peak = -std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < plane; ++i) peak = std::max(peak, x[i] / temperature);
        double total = 0.0;
        for (std::size_t i = 0; i < plane; ++i) {
            p[i] = std::exp(x[i] / temperature - peak);
            total += p[i];
        }
        const double inv = 1.0 / total;
        for (std::size_t i = 0; i < plane; ++i) p[i] *= inv;
    }
    return out;
}

Tensor spatial_softmax_backward(const Tensor& probs, const Tensor& grad_probs, double temperature) {
    const Shape& s = probs.shape();
    Tensor grad_in(s);
    const int planes = s.n * s.c;
    const std::size_t plane = s.plane();
#pragma omp parallel for schedule(static)
    for (int pl = 0; pl < planes; ++pl) {
        const double* p = probs.data() + static_cast<std::size_t>(pl) * plane;
        const double* g = grad_probs.data() + static_cast<std::size_t>(pl) * plane;
        double* gi = grad_in.data() + static_cast<std::size_t>(pl) * plane;
        double dot = 0.0;
        for (std::size_t i = 0; i < plane; ++i) dot += p[i] * g[i];
        for (std::size_t i = 0; i < plane; ++i) gi[i] = p[i] * (g[i] - dot) / temperature;
    }
    return grad_in;
}

Tensor soft_argmax_forward(const Tensor& probs) {
    const Shape& s = probs.shape();
    Tensor kp(Shape{s.n, s.c, 1, 2});
    const int planes = s.n * s.c;
#pragma omp parallel for schedule(static)
    for (int pl = 0; pl < planes; ++pl) {
        const double* p = probs.data() + static_cast<std::size_t>(pl) * s.plane();
        double mx = 0.0;
        double my = 0.0;
        for (int y = 0; y < s.h; ++y) {
            const double cy = cell_center(y, s.h);
            for (int x = 0; x < s.w; ++x) {
                const double v = p[static_cast<std::size_t>(y) * s.w + x];
                mx += v * cell_center(x, s.w);
                my += v * cy;
            }
        }
        kp[static_cast<std::size_t>(pl) * 2] = mx;
        kp[static_cast<std::size_t>(pl) * 2 + 1] = my;
    }
    return kp;
}

Tensor soft_argmax_backward(const Tensor& grad_kp, const Shape& probs_shape) {
    const Shape& s = probs_shape;
    Tensor grad(s);
    const int planes = s.n * s.c;
#pragma omp parallel for schedule(static)
    for (int pl = 0; pl < planes; ++pl) {
        const double gx = grad_kp[static_cast<std::size_t>(pl) * 2];
        const double gy = grad_kp[static_cast<std::size_t>(pl) * 2 + 1];
        double* g = grad.data() + static_cast<std::size_t>(pl) * s.plane();
        for (int y = 0; y < s.h; ++y) {
            const double cy = cell_center(y, s.h);
            for (int x = 0; x < s.w; ++x) g[static_cast<std::size_t>(y) * s.w + x] = gx * cell_center(x, s.w) + gy * cy;
        }
    }
    return grad;
}

Tensor gaussians_forward(const Tensor& keypoints, double variance, int h, int w) {
    if (!(variance > 0.0)) {
        fail(ErrorCategory::InvalidVariance, fmt::format("Gaussian variance must be > 0, got {}", variance));
    }
    const Shape& ks = keypoints.shape();
    Tensor out(Shape{ks.n, ks.c, h, w});
    const int planes = ks.n * ks.c;
    const double inv = 1.0 / (2.0 * variance);
#pragma omp parallel for schedule(static)
    for (int pl = 0; pl < planes; ++pl) {
        const double kx = keypoints[static_cast<std::size_t>(pl) * 2];
        const double ky = keypoints[static_cast<std::size_t>(pl) * 2 + 1];
        double* o = out.data() + static_cast<std::size_t>(pl) * h * w;
        for (int y = 0; y < h; ++y) {
            const double dy = cell_center(y, h) - ky;
            for (int x = 0; x < w; ++x) {
                const double dx = cell_center(x, w) - kx;
                o[static_cast<std::size_t>(y) * w + x] = std::exp(-(dx * dx + dy * dy) * inv);
            }
        }
    }
    return out;
}

Tensor gaussians_backward(const Tensor& keypoints, const Tensor& gaussians, const Tensor& grad_gaussians,
                          double variance) {
    const Shape& s = gaussians.shape();
    Tensor grad_kp(keypoints.shape());
    const int planes = s.n * s.c;
#pragma omp parallel for schedule(static)
    for (int pl = 0; pl < planes; ++pl) {
        const double kx = keypoints[static_cast<std::size_t>(pl) * 2];
        const double ky = keypoints[static_cast<std::size_t>(pl) * 2 + 1];
        const double* g = gaussians.data() + static_cast<std::size_t>(pl) * s.plane();
        const double* d = grad_gaussians.data() + static_cast<std::size_t>(pl) * s.plane();
        double gx = 0.0;
        double gy = 0.0;
        for (int y = 0; y < s.h; ++y) {
            const double dy = cell_center(y, s.h) - ky;
            for (int x = 0; x < s.w; ++x) {
                const std::size_t i = static_cast<std::size_t>(y) * s.w + x;
                const double common = d[i] * g[i] / variance;
                gx += common * (cell_center(x, s.w) - kx);
                gy += common * dy;
            }
        }
        grad_kp[static_cast<std::size_t>(pl) * 2] = gx;
        grad_kp[static_cast<std::size_t>(pl) * 2 + 1] = gy;
    }
    return grad_kp;
}

}  // namespace kpmask::kernels
