#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "flexpe/error.hpp"

namespace flexpe {

struct ConvShape {
    int H = 1, W = 1, C_in = 1, C_out = 1, K = 1, stride = 1, pad = 0;

    int out_h() const;
    int out_w() const;
    void validate() const;  // ShapeError
    std::int64_t macs() const;
    std::int64_t ifmap_elems() const { return std::int64_t{C_in} * H * W; }
    std::int64_t weight_elems() const { return std::int64_t{C_out} * C_in * K * K; }
    std::int64_t ofmap_elems() const { return std::int64_t{C_out} * out_h() * out_w(); }

    friend bool operator==(const ConvShape&, const ConvShape&) = default;
};

// GEMM (M x K) * (K x N) as a 1x1 convolution over an M x 1 image.
ConvShape gemm_as_conv(int M, int K, int N);

enum class Dim { co, ci, oh, ow, kh, kw };
inline constexpr int kDims = 6;
std::string to_string(Dim d);

enum class Dataflow { weight_stationary, output_stationary };
std::string to_string(Dataflow d);
Dataflow parse_dataflow(const std::string& s);

struct Buffers {
    std::int64_t ifmap = 1 << 16;
    std::int64_t weight = 1 << 16;
    std::int64_t psum = 1 << 16;

    friend bool operator==(const Buffers&, const Buffers&) = default;
};

Buffers buffer_preset(const std::string& name);  // small | medium | large

struct TileSchedule {
    std::array<Dim, kDims> loop_order{Dim::co, Dim::ci, Dim::oh, Dim::ow, Dim::kh, Dim::kw};
    std::array<int, kDims> tile{};  // indexed by Dim; 0 = untiled
    Buffers buffers;

    static TileSchedule for_dataflow(Dataflow d, Buffers b = {});
    bool tiled() const;
};

struct DmaCounter {
    std::uint64_t ifmap_reads = 0;
    std::uint64_t weight_reads = 0;
    std::uint64_t psum_writes = 0;
    std::uint64_t psum_reads = 0;

    DmaCounter& operator+=(const DmaCounter& o);
    friend bool operator==(const DmaCounter&, const DmaCounter&) = default;
};

enum class Tensor { ifmap, weight, psum };

// Loop-nest traffic model. Each tensor stays resident at the outermost loop
// level whose footprint fits its buffer and is refetched once per iteration
// of the loops outside that level.
struct TrafficPlan {
    int levels = 0;                    // loops in the expanded nest
    std::array<int, 3> residency{};    // chosen level per tensor (0 = whole tensor resident)
    std::array<std::int64_t, 3> footprint{};  // max resident elements at that level
    DmaCounter counters;
};

// Factorized counting over independent index groups.
TrafficPlan analytic_traffic(const ConvShape& s, const TileSchedule& sched);
// Explicit walk over every MAC with per-level residency sets. Cost O(levels * MACs).
TrafficPlan simulated_traffic(const ConvShape& s, const TileSchedule& sched);
// No reuse: every in-bounds operand access is a fetch.
DmaCounter naive_traffic(const ConvShape& s);

void validate_schedule(const ConvShape& s, const TileSchedule& sched);

struct DmaReport {
    ConvShape shape;
    DmaCounter naive;
    DmaCounter scheduled;
    std::optional<DmaCounter> measured;  // present when the walk was cheap enough
    std::array<int, 3> residency{};
    double ifmap_factor = 1;
    double weight_factor = 1;
};

inline constexpr std::int64_t kSimulationMacLimit = 20'000'000;

DmaReport dma_report(const ConvShape& s, const TileSchedule& sched);

// Layer list for `dma`/`gemm` runs; format in docs/formats.md.
struct WorkloadLayer {
    std::string name;
    ConvShape shape;
};

struct Workload {
    std::string name;
    std::string buffers_name = "medium";
    Buffers buffers = buffer_preset("medium");
    Dataflow dataflow = Dataflow::weight_stationary;
    int precision = 16;
    int rows = 8;
    int cols = 8;
    std::vector<WorkloadLayer> layers;
};

Workload parse_workload(const std::string& text, const std::string& origin = "<memory>");
Workload read_workload(const std::string& path);

}  // namespace flexpe
