#include "mom/chess.hpp"
#include "mom/tensor.hpp"

#include <benchmark/benchmark.h>

#include <cmath>
#include <vector>

namespace
{

std::vector<double> filled(std::size_t n, double seed)
{
    std::vector<double> v(n);
    for (std::size_t i = 0; i < n; ++i)
        v[i] = std::sin(seed + 0.37 * static_cast<double>(i));
    return v;
}

template <void (*Gemm)(const double*, const double*, double*, int, int, int, bool)>
void BM_Gemm(benchmark::State& state)
{
    const int n = static_cast<int>(state.range(0));
    const auto a = filled(static_cast<std::size_t>(n) * n, 0.1);
    const auto b = filled(static_cast<std::size_t>(n) * n, 0.7);
    std::vector<double> c(static_cast<std::size_t>(n) * n);
    for (auto _ : state)
    {
        Gemm(a.data(), b.data(), c.data(), n, n, n, false);
        benchmark::DoNotOptimize(c.data());
        benchmark::ClobberMemory();
    }
    state.SetItemsProcessed(state.iterations() * 2LL * n * n * n);
}

void BM_PerftSerial(benchmark::State& state)
{
    const auto pos = mom::chess::Position::initial();
    for (auto _ : state)
        benchmark::DoNotOptimize(mom::chess::perft(pos, static_cast<int>(state.range(0))));
}

void BM_PerftParallel(benchmark::State& state)
{
    const auto pos = mom::chess::Position::initial();
    for (auto _ : state)
        benchmark::DoNotOptimize(mom::chess::perft_parallel(pos, static_cast<int>(state.range(0))));
}

} // namespace

BENCHMARK(BM_Gemm<mom::kernels::serial::gemm_nn>)->Name("gemm_nn/serial")->Arg(64)->Arg(128)->Arg(256);
BENCHMARK(BM_Gemm<mom::kernels::gemm_nn>)->Name("gemm_nn/openmp")->Arg(64)->Arg(128)->Arg(256)->UseRealTime();
BENCHMARK(BM_Gemm<mom::kernels::serial::gemm_nt>)->Name("gemm_nt/serial")->Arg(128);
BENCHMARK(BM_Gemm<mom::kernels::gemm_nt>)->Name("gemm_nt/openmp")->Arg(128)->UseRealTime();
BENCHMARK(BM_PerftSerial)->Name("perft/serial")->Arg(3)->Arg(4)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_PerftParallel)->Name("perft/openmp")->Arg(3)->Arg(4)->Unit(benchmark::kMillisecond)->UseRealTime();

BENCHMARK_MAIN();
