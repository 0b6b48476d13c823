// Parallel kernels against the serial reference on generator-sized inputs.
#include <benchmark/benchmark.h>

#include "kpmask/kernels.hpp"
#include "kpmask/nn.hpp"
#include "kpmask/reference.hpp"

using namespace kpmask;

namespace {

Tensor filled(const Shape& s, std::uint64_t seed) {
    Rng rng(seed);
    Tensor t(s);
    for (double& v : t.values()) v = rng.uniform(-1, 1);
    return t;
}

template <bool Parallel>
void BM_Gemm(benchmark::State& state) {
    const int n = static_cast<int>(state.range(0));
    const Tensor a = filled(Shape{1, 1, n, n}, 1), b = filled(Shape{1, 1, n, n}, 2);
    Tensor c(Shape{1, 1, n, n});
    for (auto _ : state) {
        if constexpr (Parallel) {
            kernels::gemm(n, n, n, a.data(), n, b.data(), n, c.data(), n);
        } else {
            reference::gemm(n, n, n, a.data(), n, b.data(), n, c.data(), n);
        }
        benchmark::DoNotOptimize(c.data());
    }
    state.SetItemsProcessed(state.iterations() * 2LL * n * n * n);
}

template <bool Parallel>
void BM_Conv(benchmark::State& state) {
    const int side = static_cast<int>(state.range(0)), k = static_cast<int>(state.range(1));
    const Tensor x = filled(Shape{2, 16, side, side}, 3), w = filled(Shape{16, 16, k, k}, 4);
    for (auto _ : state) {
        Tensor y = Parallel ? kernels::conv2d_forward(x, w, nullptr) : reference::conv2d_forward(x, w, nullptr);
        benchmark::DoNotOptimize(y.data());
    }
}

template <bool Parallel>
void BM_BatchNorm(benchmark::State& state) {
    const int side = static_cast<int>(state.range(0));
    const Tensor x = filled(Shape{2, 32, side, side}, 5);
    const Tensor gamma(Shape{32, 1, 1, 1}, 1.0), beta(Shape{32, 1, 1, 1}, 0.0);
    kernels::BatchNormSaved saved;
    for (auto _ : state) {
        Tensor y = Parallel ? kernels::batch_norm_train(x, gamma, beta, 1e-5, saved)
                            : reference::batch_norm_train(x, gamma, beta, 1e-5, saved);
        benchmark::DoNotOptimize(y.data());
    }
}

template <bool Parallel>
void BM_Softmax(benchmark::State& state) {
    const int side = static_cast<int>(state.range(0));
    const Tensor x = filled(Shape{8, 10, side, side}, 6);
    for (auto _ : state) {
        Tensor y = Parallel ? kernels::spatial_softmax_forward(x, 0.1) : reference::spatial_softmax_forward(x, 0.1);
        benchmark::DoNotOptimize(y.data());
    }
}

}  // namespace

BENCHMARK(BM_Gemm<true>)->Arg(64)->Arg(256);
BENCHMARK(BM_Gemm<false>)->Arg(64)->Arg(256);
BENCHMARK(BM_Conv<true>)->Args({32, 3})->Args({64, 7});
BENCHMARK(BM_Conv<false>)->Args({32, 3})->Args({64, 7});
BENCHMARK(BM_BatchNorm<true>)->Arg(64);
BENCHMARK(BM_BatchNorm<false>)->Arg(64);
BENCHMARK(BM_Softmax<true>)->Arg(64);
BENCHMARK(BM_Softmax<false>)->Arg(64);

BENCHMARK_MAIN();
