#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "flexpe/cordic.hpp"
#include "flexpe/fixedpoint.hpp"
#include "flexpe/flex_pe.hpp"

using namespace flexpe;

namespace {

std::vector<FxpValue> inputs(QFormat f, double lo, double hi, std::size_t n = 1024) {
    std::mt19937_64 g(1);
    std::uniform_real_distribution<double> d(lo, hi);
    std::vector<FxpValue> v;
    v.reserve(n);
    for (std::size_t i = 0; i < n; ++i) v.push_back(quantize(d(g), f));
    return v;
}

void BM_SatAdd(benchmark::State& st) {
    const QFormat f = af_format(int(st.range(0)));
    const auto a = inputs(f, -2, 2), b = inputs(f, -2, 2);
    std::size_t i = 0;
    for (auto _ : st) {
        benchmark::DoNotOptimize(sat_add(a[i], b[i]));
        i = (i + 1) & 1023;
    }
}
BENCHMARK(BM_SatAdd)->Arg(8)->Arg(16)->Arg(32);

void BM_Sigmoid(benchmark::State& st) {
    const int bits = int(st.range(0));
    const auto z = inputs(af_format(bits), -1.1, 1.1);
    const StagePlan plan = default_stage_plan(bits);
    std::size_t i = 0;
    for (auto _ : st) {
        benchmark::DoNotOptimize(af_sigmoid(z[i], plan));
        i = (i + 1) & 1023;
    }
}
BENCHMARK(BM_Sigmoid)->Arg(8)->Arg(16)->Arg(32);

void BM_Tanh(benchmark::State& st) {
    const int bits = int(st.range(0));
    const auto z = inputs(af_format(bits), -1.1, 1.1);
    const StagePlan plan = default_stage_plan(bits);
    std::size_t i = 0;
    for (auto _ : st) {
        benchmark::DoNotOptimize(af_tanh(z[i], plan));
        i = (i + 1) & 1023;
    }
}
BENCHMARK(BM_Tanh)->Arg(8)->Arg(16)->Arg(32);

void BM_LrMac(benchmark::State& st) {
    const int bits = int(st.range(0));
    const QFormat f = mac_format(bits);
    const auto a = inputs(f, -1, 1), z = inputs(f, -1, 1);
    const FxpValue acc = quantize(0.0, f);
    const int stages = default_stage_plan(bits).linear_stages;
    std::size_t i = 0;
    for (auto _ : st) {
        benchmark::DoNotOptimize(lr_mac(a[i], z[i], acc, stages));
        i = (i + 1) & 1023;
    }
}
BENCHMARK(BM_LrMac)->Arg(8)->Arg(16)->Arg(32);

void BM_Divide(benchmark::State& st) {
    const QFormat f = af_format(32);
    const auto q = inputs(f, -0.5, 0.5), d = inputs(f, 0.5, 1);
    std::size_t i = 0;
    for (auto _ : st) {
        benchmark::DoNotOptimize(lv_divide(q[i], d[i], 32));
        i = (i + 1) & 1023;
    }
}
BENCHMARK(BM_Divide);

void BM_Softmax(benchmark::State& st) {
    const auto xs = inputs(af_format(16), -0.5, 0.5, std::size_t(st.range(0)));
    const StagePlan plan = default_stage_plan(16);
    for (auto _ : st) benchmark::DoNotOptimize(softmax_run(xs, plan));
    st.SetItemsProcessed(st.iterations() * st.range(0));
}
BENCHMARK(BM_Softmax)->Arg(4)->Arg(64);

}  // namespace
