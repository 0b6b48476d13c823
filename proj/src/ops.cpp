#include "kpmask/ops.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "kpmask/error.hpp"
#include "kpmask/kernels.hpp"

namespace kpmask::ops {

namespace {

Node& in(Node& self, std::size_t i) { return *self.inputs[i]; }

void push(Node& self, std::size_t i, const Tensor& g) {
    if (self.inputs[i]->requires_grad) self.inputs[i]->accumulate(g);
}

void require_same(const Shape& a, const Shape& b, const char* what) {
    if (a != b) fail(ErrorCategory::ShapeMismatch, fmt::format("{}: {} vs {}", what, a.str(), b.str()));
}

}  // namespace

Var conv2d(const Var& input, const Var& weight, const Var* bias) {
    Tensor out = kernels::conv2d_forward(input.value(), weight.value(), bias ? &bias->value() : nullptr);
    std::vector<Var> inputs{input, weight};
    if (bias != nullptr) inputs.push_back(*bias);
    return Var::make(std::move(out), std::move(inputs), [](Node& self) {
        const Tensor& x = in(self, 0).value;
        const Tensor& w = in(self, 1).value;
        if (in(self, 0).requires_grad) push(self, 0, kernels::conv2d_backward_input(self.grad, w, x.shape()));
        if (in(self, 1).requires_grad) push(self, 1, kernels::conv2d_backward_weight(x, self.grad, w.shape().h));
        if (self.inputs.size() > 2 && in(self, 2).requires_grad) push(self, 2, kernels::conv2d_backward_bias(self.grad));
    });
}

Var batch_norm(const Var& input, const Var& gamma, const Var& beta, BatchNormState state, bool training) {
    if (!training) {
        Tensor out = kernels::batch_norm_eval(input.value(), gamma.value(), beta.value(), *state.running_mean,
                                              *state.running_var, state.eps);
        if (!grad_enabled() || !(input.requires_grad() || gamma.requires_grad() || beta.requires_grad())) {
            return Var(std::move(out));
        }
        const Tensor scale_t = [&] {
            Tensor s(Shape{input.shape().c, 1, 1, 1});
            for (int c = 0; c < input.shape().c; ++c) s[c] = 1.0 / std::sqrt((*state.running_var)[c] + state.eps);
            return s;
        }();
        Tensor normalized = kernels::batch_norm_eval(input.value(), Tensor(scale_t.shape(), 1.0),
                                                     Tensor(scale_t.shape(), 0.0), *state.running_mean,
                                                     *state.running_var, state.eps);
        return Var::make(std::move(out), {input, gamma, beta},
                         [scale_t, normalized = std::move(normalized)](Node& self) {
                             const Shape& s = self.grad.shape();
                             const Tensor& g = in(self, 1).value;
                             Tensor gx(s);
                             Tensor gg(Shape{s.c, 1, 1, 1});
                             Tensor gb(Shape{s.c, 1, 1, 1});
                             for (int n = 0; n < s.n; ++n) {
                                 for (int c = 0; c < s.c; ++c) {
                                     const double* dy = self.grad.plane_ptr(n, c);
                                     const double* xh = normalized.plane_ptr(n, c);
                                     double* dx = gx.plane_ptr(n, c);
                                     for (std::size_t i = 0; i < s.plane(); ++i) {
                                         dx[i] = dy[i] * g[c] * scale_t[c];
                                         gg[c] += dy[i] * xh[i];
                                         gb[c] += dy[i];
                                     }
                                 }
                             }
                             push(self, 0, gx);
                             push(self, 1, gg);
                             push(self, 2, gb);
                         });
    }

    auto saved = std::make_shared<kernels::BatchNormSaved>();
    Tensor out = kernels::batch_norm_train(input.value(), gamma.value(), beta.value(), state.eps, *saved);
    const Shape& s = input.shape();
    const double count = static_cast<double>(s.n) * static_cast<double>(s.plane());
    for (int c = 0; c < s.c; ++c) {
        const double var = 1.0 / (saved->inv_std[c] * saved->inv_std[c]) - state.eps;
        const double unbiased = count > 1.0 ? var * count / (count - 1.0) : var;
        (*state.running_mean)[c] = (1.0 - state.momentum) * (*state.running_mean)[c] + state.momentum * saved->mean[c];
        (*state.running_var)[c] = (1.0 - state.momentum) * (*state.running_var)[c] + state.momentum * unbiased;
    }
    return Var::make(std::move(out), {input, gamma, beta}, [saved](Node& self) {
        Tensor gg;
        Tensor gb;
        Tensor gx = kernels::batch_norm_backward(self.grad, in(self, 1).value, *saved, gg, gb);
        push(self, 0, gx);
        push(self, 1, gg);
        push(self, 2, gb);
    });
}

Var relu(const Var& x) {
    Tensor out = x.value();
    // NaN passes through so a diverging run surfaces as a non-finite loss.
    for (double& v : out.values()) v = v < 0.0 ? 0.0 : v;
    return Var::make(std::move(out), {x}, [](Node& self) {
        Tensor g = self.grad;
        const Tensor& xv = in(self, 0).value;
        for (std::size_t i = 0; i < g.size(); ++i)
            if (!(xv[i] > 0.0)) g[i] = 0.0;
        push(self, 0, g);
    });
}

Var sigmoid(const Var& x) {
    Tensor out = x.value();
    for (double& v : out.values()) v = 1.0 / (1.0 + std::exp(-v));
    return Var::make(std::move(out), {x}, [](Node& self) {
        Tensor g = self.grad;
        const Tensor& y = self.value;
        for (std::size_t i = 0; i < g.size(); ++i) g[i] *= y[i] * (1.0 - y[i]);
        push(self, 0, g);
    });
}

Var add(const Var& a, const Var& b) {
    require_same(a.shape(), b.shape(), "add");
    Tensor out = a.value();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += b.value()[i];
    return Var::make(std::move(out), {a, b}, [](Node& self) {
        push(self, 0, self.grad);
        push(self, 1, self.grad);
    });
}

Var scale(const Var& x, double factor) {
    Tensor out = x.value();
    for (double& v : out.values()) v *= factor;
    return Var::make(std::move(out), {x}, [factor](Node& self) {
        Tensor g = self.grad;
        for (double& v : g.values()) v *= factor;
        push(self, 0, g);
    });
}

Var channel_affine(const Var& x, std::span<const double> shift, std::span<const double> factor) {
    const Shape& s = x.shape();
    if (static_cast<int>(shift.size()) != s.c || static_cast<int>(factor.size()) != s.c) {
        fail(ErrorCategory::ShapeMismatch, fmt::format("channel_affine: {} channels vs {} constants", s.c, shift.size()));
    }
    Tensor out = x.value();
    for (int n = 0; n < s.n; ++n)
        for (int c = 0; c < s.c; ++c) {
            double* p = out.plane_ptr(n, c);
            for (std::size_t i = 0; i < s.plane(); ++i) p[i] = (p[i] - shift[c]) * factor[c];
        }
    std::vector<double> f(factor.begin(), factor.end());
    return Var::make(std::move(out), {x}, [f = std::move(f)](Node& self) {
        Tensor g = self.grad;
        const Shape& s = g.shape();
        for (int n = 0; n < s.n; ++n)
            for (int c = 0; c < s.c; ++c) {
                double* p = g.plane_ptr(n, c);
                for (std::size_t i = 0; i < s.plane(); ++i) p[i] *= f[c];
            }
        push(self, 0, g);
    });
}

Var concat_channels(std::span<const Var> parts) {
    if (parts.empty()) fail(ErrorCategory::ShapeMismatch, "concat_channels of nothing");
    Shape s = parts[0].shape();
    int channels = 0;
    for (const Var& p : parts) {
        const Shape& ps = p.shape();
        if (ps.n != s.n || ps.h != s.h || ps.w != s.w) {
            fail(ErrorCategory::ShapeMismatch, fmt::format("concat_channels: {} vs {}", ps.str(), s.str()));
        }
        channels += ps.c;
    }
    s.c = channels;
    Tensor out(s);
    for (int n = 0; n < s.n; ++n) {
        double* dst = out.sample_ptr(n);
        for (const Var& p : parts) {
            const std::size_t len = p.shape().sample();
            std::copy_n(p.value().sample_ptr(n), len, dst);
            dst += len;
        }
    }
    return Var::make(std::move(out), std::vector<Var>(parts.begin(), parts.end()), [](Node& self) {
        const Shape& s = self.grad.shape();
        std::size_t offset = 0;
        for (std::size_t i = 0; i < self.inputs.size(); ++i) {
            const Shape& ps = self.inputs[i]->value.shape();
            if (self.inputs[i]->requires_grad) {
                Tensor g(ps);
                for (int n = 0; n < s.n; ++n)
                    std::copy_n(self.grad.sample_ptr(n) + offset, ps.sample(), g.sample_ptr(n));
                self.inputs[i]->accumulate(g);
            }
            offset += ps.sample();
        }
    });
}

Var concat_batch(std::span<const Var> parts) {
    std::vector<Tensor> values;
    values.reserve(parts.size());
    for (const Var& p : parts) values.push_back(p.value());
    Tensor out = kpmask::concat_batch(values);
    return Var::make(std::move(out), std::vector<Var>(parts.begin(), parts.end()), [](Node& self) {
        int begin = 0;
        for (std::size_t i = 0; i < self.inputs.size(); ++i) {
            const int count = self.inputs[i]->value.shape().n;
            if (self.inputs[i]->requires_grad) self.inputs[i]->accumulate(self.grad.slice_batch(begin, begin + count));
            begin += count;
        }
    });
}

Var slice_batch(const Var& x, int begin, int end) {
    Tensor out = x.value().slice_batch(begin, end);
    return Var::make(std::move(out), {x}, [begin](Node& self) {
        Tensor g(in(self, 0).value.shape());
        std::copy_n(self.grad.data(), self.grad.size(), g.sample_ptr(begin));
        push(self, 0, g);
    });
}

Var avg_pool(const Var& x, int factor) {
    if (factor == 1) return x;
    Tensor out = kernels::avg_pool_forward(x.value(), factor);
    return Var::make(std::move(out), {x},
                     [factor](Node& self) { push(self, 0, kernels::avg_pool_backward(self.grad, factor)); });
}

Var max_pool2(const Var& x) {
    auto argmax = std::make_shared<std::vector<std::size_t>>();
    Tensor out = kernels::max_pool2_forward(x.value(), *argmax);
    return Var::make(std::move(out), {x}, [argmax](Node& self) {
        push(self, 0, kernels::max_pool2_backward(self.grad, *argmax, in(self, 0).value.shape()));
    });
}

Var upsample_nearest(const Var& x, int factor) {
    if (factor == 1) return x;
    Tensor out = kernels::upsample_nearest_forward(x.value(), factor);
    return Var::make(std::move(out), {x},
                     [factor](Node& self) { push(self, 0, kernels::upsample_nearest_backward(self.grad, factor)); });
}

Var spatial_softmax(const Var& logits, double temperature) {
    Tensor out = kernels::spatial_softmax_forward(logits.value(), temperature);
    return Var::make(std::move(out), {logits}, [temperature](Node& self) {
        push(self, 0, kernels::spatial_softmax_backward(self.value, self.grad, temperature));
    });
}

Var soft_argmax(const Var& probs) {
    Tensor out = kernels::soft_argmax_forward(probs.value());
    return Var::make(std::move(out), {probs}, [](Node& self) {
        push(self, 0, kernels::soft_argmax_backward(self.grad, in(self, 0).value.shape()));
    });
}

Var render_gaussians(const Var& keypoints, double variance, int h, int w) {
    Tensor out = kernels::gaussians_forward(keypoints.value(), variance, h, w);
    return Var::make(std::move(out), {keypoints}, [variance](Node& self) {
        push(self, 0, kernels::gaussians_backward(in(self, 0).value, self.value, self.grad, variance));
    });
}

Var channel_sum(const Var& x) {
    const Shape& s = x.shape();
    Tensor out(Shape{s.n, 1, s.h, s.w});
    for (int n = 0; n < s.n; ++n) {
        double* o = out.sample_ptr(n);
        for (int c = 0; c < s.c; ++c) {
            const double* p = x.value().plane_ptr(n, c);
            for (std::size_t i = 0; i < s.plane(); ++i) o[i] += p[i];
        }
    }
    return Var::make(std::move(out), {x}, [](Node& self) {
        const Shape& s = in(self, 0).value.shape();
        Tensor g(s);
        for (int n = 0; n < s.n; ++n)
            for (int c = 0; c < s.c; ++c) std::copy_n(self.grad.sample_ptr(n), s.plane(), g.plane_ptr(n, c));
        push(self, 0, g);
    });
}

Var minmax_normalize(const Var& x, double threshold) {
    const Shape& s = x.shape();
    const std::size_t len = s.sample();
    Tensor out(s);
    // Per sample: argmin, argmax, range (0 marks a degenerate sample).
    std::vector<std::size_t> lo(s.n);
    std::vector<std::size_t> hi(s.n);
    std::vector<double> range(s.n);
    for (int n = 0; n < s.n; ++n) {
        const double* p = x.value().sample_ptr(n);
        std::size_t imin = 0;
        std::size_t imax = 0;
        for (std::size_t i = 1; i < len; ++i) {
            if (p[i] < p[imin]) imin = i;
            if (p[i] > p[imax]) imax = i;
        }
        lo[n] = imin;
        hi[n] = imax;
        range[n] = p[imax] - p[imin];
        double* o = out.sample_ptr(n);
        if (!(range[n] > 0.0)) {
            range[n] = 0.0;
            continue;
        }
        for (std::size_t i = 0; i < len; ++i) {
            const double v = (p[i] - p[imin]) / range[n];
            o[i] = (threshold > 0.0 && v < threshold) ? 0.0 : v;
        }
    }
    return Var::make(std::move(out), {x}, [lo, hi, range, threshold](Node& self) {
        const Shape& s = self.grad.shape();
        const std::size_t len = s.sample();
        Tensor g(s);
        for (int n = 0; n < s.n; ++n) {
            if (range[n] == 0.0) continue;
            const double* dy = self.grad.sample_ptr(n);
            const double* x = in(self, 0).value.sample_ptr(n);
            const double mn = x[lo[n]];
            double* gx = g.sample_ptr(n);
            double d_min = 0.0;
            double d_max = 0.0;
            for (std::size_t i = 0; i < len; ++i) {
                const double y = (x[i] - mn) / range[n];
                if (threshold > 0.0 && y < threshold) continue;
                gx[i] += dy[i] / range[n];
                d_min += dy[i] * (y - 1.0) / range[n];
                d_max -= dy[i] * y / range[n];
            }
            gx[lo[n]] += d_min;
            gx[hi[n]] += d_max;
        }
        push(self, 0, g);
    });
}

Var clamp01(const Var& x) {
    Tensor out = x.value();
    for (double& v : out.values()) v = std::clamp(v, 0.0, 1.0);
    return Var::make(std::move(out), {x}, [](Node& self) {
        Tensor g = self.grad;
        const Tensor& xv = in(self, 0).value;
        for (std::size_t i = 0; i < g.size(); ++i)
            if (xv[i] < 0.0 || xv[i] > 1.0) g[i] = 0.0;
        push(self, 0, g);
    });
}

Var mean_abs_diff(const Var& a, const Var& b) {
    require_same(a.shape(), b.shape(), "mean_abs_diff");
    const std::size_t count = a.value().size();
    double total = 0.0;
    for (std::size_t i = 0; i < count; ++i) total += std::abs(a.value()[i] - b.value()[i]);
    return Var::make(Tensor::scalar(total / static_cast<double>(count)), {a, b}, [count](Node& self) {
        const Tensor& av = in(self, 0).value;
        const Tensor& bv = in(self, 1).value;
        const double g = self.grad[0] / static_cast<double>(count);
        Tensor ga(av.shape());
        for (std::size_t i = 0; i < count; ++i) {
            const double d = av[i] - bv[i];
            ga[i] = d > 0.0 ? g : (d < 0.0 ? -g : 0.0);
        }
        if (in(self, 1).requires_grad) {
            Tensor gb = ga;
            for (double& v : gb.values()) v = -v;
            push(self, 1, gb);
        }
        push(self, 0, ga);
    });
}

Var sum_scalars(std::span<const Var> terms) {
    double total = 0.0;
    for (const Var& t : terms) {
        if (t.value().size() != 1) fail(ErrorCategory::ShapeMismatch, "sum_scalars expects scalars");
        total += t.item();
    }
    return Var::make(Tensor::scalar(total), std::vector<Var>(terms.begin(), terms.end()), [](Node& self) {
        for (std::size_t i = 0; i < self.inputs.size(); ++i) push(self, i, self.grad);
    });
}

}  // namespace kpmask::ops
