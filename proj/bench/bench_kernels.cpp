// Serial reference vs OpenMP kernels at the toy DiT's working sizes
// (1664 tokens = two 49-frame chunks of 32x32 video, model width 64).

#include <benchmark/benchmark.h>

#include "mcflow/kernels.hpp"
#include "mcflow/rng.hpp"

using namespace mcflow;

namespace {

constexpr std::size_t kTokens = 1664;
constexpr std::size_t kWidth = 64;

template <bool Parallel>
void BM_GemmLinear(benchmark::State& state) {
    const auto m = static_cast<std::size_t>(state.range(0));
    Rng rng(1);
    const Tensor x = randn({kTokens, kWidth}, rng), w = randn({kWidth, m}, rng);
    Tensor y({kTokens, m});
    for (auto _ : state) {
        if constexpr (Parallel)
            kernels::gemm_nn(x.data(), w.data(), y.data(), kTokens, kWidth, m);
        else
            kernels::reference::gemm_nn(x.data(), w.data(), y.data(), kTokens, kWidth, m);
        benchmark::DoNotOptimize(y.data().data());
    }
    state.counters["GFLOPS"] = benchmark::Counter(2.0 * kTokens * kWidth * m, benchmark::Counter::kIsIterationInvariantRate,
                                                  benchmark::Counter::kIs1000);
}

template <bool Parallel>
void BM_AttentionForward(benchmark::State& state) {
    const auto n = static_cast<std::size_t>(state.range(0));
    const kernels::AttentionDims dims{n, 4, 16};
    Rng rng(2);
    const Tensor q = randn({n, kWidth}, rng), k = randn({n, kWidth}, rng), v = randn({n, kWidth}, rng);
    Tensor out({n, kWidth}), probs({4 * n * n});
    for (auto _ : state) {
        if constexpr (Parallel)
            kernels::attention_forward(dims, q.data(), k.data(), v.data(), out.data(), probs.data());
        else
            kernels::reference::attention_forward(dims, q.data(), k.data(), v.data(), out.data(), probs.data());
        benchmark::DoNotOptimize(out.data().data());
    }
}

template <bool Parallel>
void BM_AttentionBackward(benchmark::State& state) {
    const auto n = static_cast<std::size_t>(state.range(0));
    const kernels::AttentionDims dims{n, 4, 16};
    Rng rng(3);
    const Tensor q = randn({n, kWidth}, rng), k = randn({n, kWidth}, rng), v = randn({n, kWidth}, rng),
                 g = randn({n, kWidth}, rng);
    Tensor out({n, kWidth}), probs({4 * n * n});
    kernels::attention_forward(dims, q.data(), k.data(), v.data(), out.data(), probs.data());
    Tensor dq({n, kWidth}), dk({n, kWidth}), dv({n, kWidth});
    for (auto _ : state) {
        if constexpr (Parallel)
            kernels::attention_backward(dims, q.data(), k.data(), v.data(), probs.data(), g.data(), dq.data(),
                                        dk.data(), dv.data());
        else
            kernels::reference::attention_backward(dims, q.data(), k.data(), v.data(), probs.data(), g.data(),
                                                   dq.data(), dk.data(), dv.data());
        benchmark::DoNotOptimize(dq.data().data());
    }
}

}  // namespace

BENCHMARK(BM_GemmLinear<false>)->Arg(64)->Arg(192)->Arg(256)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_GemmLinear<true>)->Arg(64)->Arg(192)->Arg(256)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_AttentionForward<false>)->Arg(832)->Arg(kTokens)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_AttentionForward<true>)->Arg(832)->Arg(kTokens)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_AttentionBackward<false>)->Arg(832)->Arg(kTokens)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_AttentionBackward<true>)->Arg(832)->Arg(kTokens)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
