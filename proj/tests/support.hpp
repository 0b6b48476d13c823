#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "kpmask/autograd.hpp"
#include "kpmask/error.hpp"
#include "kpmask/nn.hpp"

namespace kpmask::testing {

inline Tensor random_tensor(const Shape& shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
    Tensor t(shape);
    for (double& v : t.values()) v = rng.uniform(lo, hi);
    return t;
}

struct GradCheck {
    double rel_error = 0.0;  // ||analytic - numeric|| / max(||analytic||, ||numeric||)
    double max_abs = 0.0;
    double analytic_norm = 0.0;
    std::size_t checked = 0;
};

/// Central differences on up to `per_param` entries of each parameter.
inline GradCheck check_gradients(const std::function<Var()>& loss, const std::vector<Var>& params,
                                 std::size_t per_param, std::uint64_t seed, double h = 1e-6) {
    for (Var p : params) p.zero_grad();
    backward(loss());
    std::vector<double> analytic;
    std::vector<double> numeric;
    Rng rng(seed);
    for (Var p : params) {
        const Tensor grad = p.has_grad() ? p.grad() : Tensor(p.shape());
        const std::size_t n = p.value().size();
        std::vector<std::size_t> idx;
        if (n <= per_param) {
            for (std::size_t i = 0; i < n; ++i) idx.push_back(i);
        } else {
            for (std::size_t i = 0; i < per_param; ++i) idx.push_back(rng.below(n));
        }
        for (std::size_t i : idx) {
            NoGradGuard guard;
            double& slot = p.mutable_value()[i];
            const double saved = slot;
            slot = saved + h;
            const double up = loss().item();
            slot = saved - h;
            const double down = loss().item();
            slot = saved;
            analytic.push_back(grad[i]);
            numeric.push_back((up - down) / (2.0 * h));
        }
    }
    GradCheck out;
    double diff = 0.0;
    double na = 0.0;
    double nn = 0.0;
    for (std::size_t i = 0; i < analytic.size(); ++i) {
        diff += (analytic[i] - numeric[i]) * (analytic[i] - numeric[i]);
        na += analytic[i] * analytic[i];
        nn += numeric[i] * numeric[i];
        out.max_abs = std::max(out.max_abs, std::abs(analytic[i] - numeric[i]));
    }
    out.analytic_norm = std::sqrt(na);
    out.rel_error = std::sqrt(diff) / std::max(1e-12, std::max(std::sqrt(na), std::sqrt(nn)));
    out.checked = analytic.size();
    return out;
}

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
    const auto dir = std::filesystem::temp_directory_path() / ("kpmask_" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

}  // namespace kpmask::testing
