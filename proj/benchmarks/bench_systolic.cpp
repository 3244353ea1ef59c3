#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "flexpe/systolic.hpp"

using namespace flexpe;

namespace {

FxpMatrix random_matrix(int r, int c, QFormat f, std::uint64_t seed) {
    std::mt19937_64 g(seed);
    std::uniform_real_distribution<double> d(-1, 1);
    std::vector<double> v(static_cast<std::size_t>(r) * c);
    for (double& x : v) x = d(g);
    return FxpMatrix::quantized(r, c, f, v);
}

void BM_Gemm(benchmark::State& st) {
    const int n = int(st.range(0));
    const ArrayConfig cfg = ArrayConfig::make(Precision::FxP16);
    const QFormat f = mac_format(16);
    const FxpMatrix A = random_matrix(n, n, f, 1), B = random_matrix(n, n, f, 2);
    const TileSchedule sched = TileSchedule::for_dataflow(cfg.dataflow);
    for (auto _ : st) benchmark::DoNotOptimize(run_gemm(A, B, cfg, sched));
    st.SetItemsProcessed(st.iterations() * std::int64_t(n) * n * n);
}
BENCHMARK(BM_Gemm)->Arg(8)->Arg(32);

void BM_GemmReference(benchmark::State& st) {
    const int n = int(st.range(0));
    const QFormat f = mac_format(16);
    const FxpMatrix A = random_matrix(n, n, f, 1), B = random_matrix(n, n, f, 2);
    const int lin = default_stage_plan(16).linear_stages;
    for (auto _ : st) benchmark::DoNotOptimize(gemm_reference(A, B, lin));
    st.SetItemsProcessed(st.iterations() * std::int64_t(n) * n * n);
}
BENCHMARK(BM_GemmReference)->Arg(8)->Arg(32);

}  // namespace
