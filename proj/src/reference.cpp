#include "kpmask/reference.hpp"

#include <cmath>
#include <limits>

#include "kpmask/error.hpp"

namespace kpmask::reference {

using kernels::cell_center;

void gemm(int m, int n, int k, const double* a, int lda, const double* b, int ldb, double* c, int ldc) {
    for (int i = 0; i < m; ++i) {
        for (int j = 0; j < n; ++j) {
            double acc = 0.0;
            for (int p = 0; p < k; ++p) acc += a[i * lda + p] * b[p * ldb + j];
            c[i * ldc + j] += acc;
        }
    }
}

Tensor conv2d_forward(const Tensor& input, const Tensor& weight, const Tensor* bias) {
    const Shape& is = input.shape();
    const Shape& ws = weight.shape();
    if (is.c != ws.c) fail(ErrorCategory::ShapeMismatch, "reference conv: channel mismatch");
    const int pad = ws.h / 2;
    Tensor out(Shape{is.n, ws.n, is.h, is.w});
    for (int n = 0; n < is.n; ++n) {
        for (int co = 0; co < ws.n; ++co) {
            for (int y = 0; y < is.h; ++y) {
                for (int x = 0; x < is.w; ++x) {
                    double acc = bias != nullptr ? (*bias)[co] : 0.0;
                    for (int ci = 0; ci < is.c; ++ci) {
                        for (int ky = 0; ky < ws.h; ++ky) {
                            for (int kx = 0; kx < ws.w; ++kx) {
                                const int yy = y + ky - pad;
                                const int xx = x + kx - pad;
                                if (yy < 0 || yy >= is.h || xx < 0 || xx >= is.w) continue;
                                acc += weight.at(co, ci, ky, kx) * input.at(n, ci, yy, xx);
                            }
                        }
                    }
                    out.at(n, co, y, x) = acc;
                }
            }
        }
    }
    return out;
}

Tensor conv2d_backward_input(const Tensor& grad_out, const Tensor& weight, const Shape& input_shape) {
    const Shape& ws = weight.shape();
    const int pad = ws.h / 2;
    Tensor grad_in(input_shape);
    for (int n = 0; n < input_shape.n; ++n) {
        for (int co = 0; co < ws.n; ++co) {
            for (int y = 0; y < input_shape.h; ++y) {
                for (int x = 0; x < input_shape.w; ++x) {
                    const double g = grad_out.at(n, co, y, x);
                    for (int ci = 0; ci < input_shape.c; ++ci) {
                        for (int ky = 0; ky < ws.h; ++ky) {
                            for (int kx = 0; kx < ws.w; ++kx) {
                                const int yy = y + ky - pad;
                                const int xx = x + kx - pad;
                                if (yy < 0 || yy >= input_shape.h || xx < 0 || xx >= input_shape.w) continue;
                                grad_in.at(n, ci, yy, xx) += weight.at(co, ci, ky, kx) * g;
                            }
                        }
                    }
                }
            }
        }
    }
    return grad_in;
}

Tensor conv2d_backward_weight(const Tensor& input, const Tensor& grad_out, int kernel) {
    const Shape& is = input.shape();
    const int cout = grad_out.shape().c;
    const int pad = kernel / 2;
    Tensor grad_w(Shape{cout, is.c, kernel, kernel});
    for (int n = 0; n < is.n; ++n) {
        for (int co = 0; co < cout; ++co) {
            for (int y = 0; y < is.h; ++y) {
                for (int x = 0; x < is.w; ++x) {
                    const double g = grad_out.at(n, co, y, x);
                    for (int ci = 0; ci < is.c; ++ci) {
                        for (int ky = 0; ky < kernel; ++ky) {
                            for (int kx = 0; kx < kernel; ++kx) {
                                const int yy = y + ky - pad;
                                const int xx = x + kx - pad;
                                if (yy < 0 || yy >= is.h || xx < 0 || xx >= is.w) continue;
                                grad_w.at(co, ci, ky, kx) += g * input.at(n, ci, yy, xx);
                            }
                        }
                    }
                }
            }
        }
    }
    return grad_w;
}

Tensor avg_pool_forward(const Tensor& input, int factor) {
    const Shape& s = input.shape();
    Tensor out(Shape{s.n, s.c, s.h / factor, s.w / factor});
    for (int n = 0; n < s.n; ++n)
        for (int c = 0; c < s.c; ++c)
            for (int y = 0; y < s.h / factor; ++y)
                for (int x = 0; x < s.w / factor; ++x) {
                    double acc = 0.0;
                    for (int dy = 0; dy < factor; ++dy)
                        for (int dx = 0; dx < factor; ++dx) acc += input.at(n, c, y * factor + dy, x * factor + dx);
                    out.at(n, c, y, x) = acc / (factor * factor);
                }
    return out;
}

Tensor max_pool2_forward(const Tensor& input, std::vector<std::size_t>& argmax) {
    const Shape& s = input.shape();
    Tensor out(Shape{s.n, s.c, s.h / 2, s.w / 2});
    argmax.assign(out.size(), 0);
    std::size_t o = 0;
    for (int n = 0; n < s.n; ++n)
        for (int c = 0; c < s.c; ++c)
            for (int y = 0; y < s.h / 2; ++y)
                for (int x = 0; x < s.w / 2; ++x, ++o) {
                    double best = -std::numeric_limits<double>::infinity();
                    std::size_t best_idx = 0;
                    for (int dy = 0; dy < 2; ++dy)
                        for (int dx = 0; dx < 2; ++dx) {
                            const std::size_t idx =
                                ((static_cast<std::size_t>(n) * s.c + c) * s.h + 2 * y + dy) * s.w + 2 * x + dx;
                            if (input[idx] > best) {
                                best = input[idx];
                                best_idx = idx;
                            }
                        }
                    out[o] = best;
                    argmax[o] = best_idx;
                }
    return out;
}

Tensor upsample_nearest_forward(const Tensor& input, int factor) {
    const Shape& s = input.shape();
    Tensor out(Shape{s.n, s.c, s.h * factor, s.w * factor});
    for (int n = 0; n < s.n; ++n)
        for (int c = 0; c < s.c; ++c)
            for (int y = 0; y < s.h * factor; ++y)
                for (int x = 0; x < s.w * factor; ++x) out.at(n, c, y, x) = input.at(n, c, y / factor, x / factor);
    return out;
}

Tensor batch_norm_train(const Tensor& input, const Tensor& gamma, const Tensor& beta, double eps,
                        kernels::BatchNormSaved& saved) {
    const Shape& s = input.shape();
    const double count = static_cast<double>(s.n * s.h * s.w);
    Tensor out(s);
    saved.normalized = Tensor(s);
    saved.mean.assign(s.c, 0.0);
    saved.inv_std.assign(s.c, 0.0);
    for (int c = 0; c < s.c; ++c) {
        double mean = 0.0;
        for (int n = 0; n < s.n; ++n)
            for (int y = 0; y < s.h; ++y)
                for (int x = 0; x < s.w; ++x) mean += input.at(n, c, y, x);
        mean /= count;
        double var = 0.0;
        for (int n = 0; n < s.n; ++n)
            for (int y = 0; y < s.h; ++y)
                for (int x = 0; x < s.w; ++x) var += std::pow(input.at(n, c, y, x) - mean, 2);
        var /= count;
        saved.mean[c] = mean;
        saved.inv_std[c] = 1.0 / std::sqrt(var + eps);
        for (int n = 0; n < s.n; ++n)
            for (int y = 0; y < s.h; ++y)
                for (int x = 0; x < s.w; ++x) {
                    const double xh = (input.at(n, c, y, x) - mean) * saved.inv_std[c];
                    saved.normalized.at(n, c, y, x) = xh;
                    out.at(n, c, y, x) = gamma[c] * xh + beta[c];
                }
    }
    return out;
}

Tensor batch_norm_backward(const Tensor& grad_out, const Tensor& gamma, const kernels::BatchNormSaved& saved,
                           Tensor& grad_gamma, Tensor& grad_beta) {
    const Shape& s = grad_out.shape();
    const double count = static_cast<double>(s.n * s.h * s.w);
    Tensor grad_in(s);
    grad_gamma = Tensor(Shape{s.c, 1, 1, 1});
    grad_beta = Tensor(Shape{s.c, 1, 1, 1});
    for (int c = 0; c < s.c; ++c) {
        double sum_dy = 0.0;
        double sum_dy_xh = 0.0;
        for (int n = 0; n < s.n; ++n)
            for (int y = 0; y < s.h; ++y)
                for (int x = 0; x < s.w; ++x) {
                    sum_dy += grad_out.at(n, c, y, x);
                    sum_dy_xh += grad_out.at(n, c, y, x) * saved.normalized.at(n, c, y, x);
                }
        grad_gamma[c] = sum_dy_xh;
        grad_beta[c] = sum_dy;
        for (int n = 0; n < s.n; ++n)
            for (int y = 0; y < s.h; ++y)
                for (int x = 0; x < s.w; ++x) {
                    const double dxh = grad_out.at(n, c, y, x) * gamma[c];
                    const double xh = saved.normalized.at(n, c, y, x);
                    // d/dx of gamma * (x - mean) * inv_std, expanded term by term.
                    grad_in.at(n, c, y, x) = saved.inv_std[c] *
                                             (dxh - gamma[c] * sum_dy / count - xh * gamma[c] * sum_dy_xh / count);
                }
    }
    return grad_in;
}

Tensor spatial_softmax_forward(const Tensor& logits, double temperature) {
    if (!(temperature > 0.0)) fail(ErrorCategory::InvalidTemperature, "temperature must be > 0");
    const Shape& s = logits.shape();
    Tensor out(s);
    for (int n = 0; n < s.n; ++n)
        for (int c = 0; c < s.c; ++c) {
            double peak = -std::numeric_limits<double>::infinity();
            for (int y = 0; y < s.h; ++y)
                for (int x = 0; x < s.w; ++x) peak = std::max(peak, logits.at(n, c, y, x) / temperature);
            double total = 0.0;
            for (int y = 0; y < s.h; ++y)
                for (int x = 0; x < s.w; ++x) total += std::exp(logits.at(n, c, y, x) / temperature - peak);
            for (int y = 0; y < s.h; ++y)
                for (int x = 0; x < s.w; ++x)
                    out.at(n, c, y, x) = std::exp(logits.at(n, c, y, x) / temperature - peak) / total;
        }
    return out;
}

Tensor soft_argmax_forward(const Tensor& probs) {
    const Shape& s = probs.shape();
    Tensor kp(Shape{s.n, s.c, 1, 2});
    for (int n = 0; n < s.n; ++n)
        for (int c = 0; c < s.c; ++c) {
            double mx = 0.0;
            double my = 0.0;
            for (int y = 0; y < s.h; ++y)
                for (int x = 0; x < s.w; ++x) {
                    mx += probs.at(n, c, y, x) * cell_center(x, s.w);
                    my += probs.at(n, c, y, x) * cell_center(y, s.h);
                }
            kp.at(n, c, 0, 0) = mx;
            kp.at(n, c, 0, 1) = my;
        }
    return kp;
}

Tensor gaussians_forward(const Tensor& keypoints, double variance, int h, int w) {
    if (!(variance > 0.0)) fail(ErrorCategory::InvalidVariance, "variance must be > 0");
    const Shape& ks = keypoints.shape();
    Tensor out(Shape{ks.n, ks.c, h, w});
    for (int n = 0; n < ks.n; ++n)
        for (int c = 0; c < ks.c; ++c)
            for (int y = 0; y < h; ++y)
                for (int x = 0; x < w; ++x) {
                    const double dx = cell_center(x, w) - keypoints.at(n, c, 0, 0);
                    const double dy = cell_center(y, h) - keypoints.at(n, c, 0, 1);
                    out.at(n, c, y, x) = std::exp(-(dx * dx + dy * dy) / (2.0 * variance));
                }
    return out;
}

}  // namespace kpmask::reference
