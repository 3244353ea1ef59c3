#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "flexpe/dma.hpp"
#include "flexpe/fixedpoint.hpp"
#include "flexpe/flex_pe.hpp"

namespace flexpe {

// Row-major matrix of raw values sharing one format.
struct FxpMatrix {
    int rows = 0;
    int cols = 0;
    QFormat format{};
    std::vector<std::int64_t> raw;

    FxpMatrix() = default;
    FxpMatrix(int r, int c, QFormat f) : rows(r), cols(c), format(f), raw(static_cast<std::size_t>(r) * c, 0) {}

    std::int64_t& at(int r, int c) { return raw[static_cast<std::size_t>(r) * cols + c]; }
    std::int64_t at(int r, int c) const { return raw[static_cast<std::size_t>(r) * cols + c]; }
    FxpValue value(int r, int c) const { return FxpValue{at(r, c), format}; }
    double real(int r, int c) const { return value(r, c).real(); }

    static FxpMatrix quantized(int r, int c, QFormat f, const std::vector<double>& values);
    friend bool operator==(const FxpMatrix&, const FxpMatrix&) = default;
};

struct ArrayConfig {
    int rows = 8;
    int cols = 8;
    PeConfig pe_config = PeConfig::make(Precision::FxP16, AfSel::relu, CtrlOp::mac);
    Dataflow dataflow = Dataflow::weight_stationary;

    static ArrayConfig make(Precision p, int rows = 8, int cols = 8, Dataflow d = Dataflow::weight_stationary);
};

void validate(const ArrayConfig& cfg);

struct GemmResult {
    FxpMatrix C;
    DmaCounter counters;
    std::int64_t cycles = 0;
};

// C = C0 + A*B through a wavefront simulation of the PE grid. Every output
// element accumulates k ascending, so the result is bit-identical to
// gemm_reference.
GemmResult run_gemm(const FxpMatrix& A, const FxpMatrix& B, const ArrayConfig& cfg, const TileSchedule& sched,
                    const FxpMatrix* C0 = nullptr);
FxpMatrix gemm_reference(const FxpMatrix& A, const FxpMatrix& B, int lin_stages, const FxpMatrix* C0 = nullptr);
std::int64_t gemm_cycles(int M, int K, int N, const ArrayConfig& cfg);

// Activation tensor C x H x W and filters C_out x C_in x K x K, row-major.
struct FxpTensor {
    std::vector<int> shape;
    QFormat format{};
    std::vector<std::int64_t> raw;

    std::size_t size() const { return raw.size(); }
};

struct ConvResult {
    FxpTensor ofmap;  // C_out x OH x OW
    DmaCounter counters;
    std::int64_t cycles = 0;
};

// im2col + run_gemm. Bias (one per output channel) seeds the accumulator.
// With fuse_af the ofmap goes through pe_execute using cfg.pe_config.sel_af,
// after conversion to the AF lane format.
ConvResult run_conv2d(const FxpTensor& ifmap, const FxpTensor& weights, const ConvShape& shape,
                      const ArrayConfig& cfg, const TileSchedule& sched, const std::vector<std::int64_t>* bias = nullptr,
                      bool fuse_af = false);
FxpTensor conv_reference(const FxpTensor& ifmap, const FxpTensor& weights, const ConvShape& shape, int lin_stages,
                         const std::vector<std::int64_t>* bias = nullptr);

// Apply an AF to a flat vector of lane values through packed pe_execute calls.
std::vector<FxpValue> apply_af_packed(const std::vector<FxpValue>& v, const PeConfig& cfg);

struct ThroughputReport {
    double ops_per_cycle = 0;
    double issue_rate = 0;  // issues per cycle per PE
    int lanes = 0;
    double clock_hz = 0;
    double gops = 0;
    std::int64_t workload_ops = 0;
    double workload_seconds = 0;
};

ThroughputReport throughput_report(const ArrayConfig& cfg, double clock_hz, std::int64_t workload_macs = 0);

}  // namespace flexpe
