#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "flexpe/error_harness.hpp"
#include "flexpe/fixedpoint.hpp"

namespace flexpe::test {

// Uniform raw value of a format, rails included.
inline std::int64_t random_raw(Uniform& u, QFormat f) {
    const double span = double(f.max_raw()) - double(f.min_raw()) + 1;
    return f.min_raw() + static_cast<std::int64_t>(std::floor(u.unit() * span));
}

inline FxpValue random_value(Uniform& u, QFormat f) { return FxpValue{random_raw(u, f), f}; }

inline FxpValue random_in(Uniform& u, QFormat f, double lo, double hi) { return quantize(u.range(lo, hi), f); }

inline std::vector<QFormat> lane_formats(const LaneConfig& cfg, int frac_below_width = 3) {
    std::vector<QFormat> out;
    for (int w : cfg.widths()) out.push_back(make_qformat(w, std::max(0, w - frac_below_width)));
    return out;
}

inline SimdWord random_word(Uniform& u, const LaneConfig& cfg) {
    std::vector<FxpValue> v;
    for (QFormat f : lane_formats(cfg)) v.push_back(random_value(u, f));
    return pack_lanes(v, cfg);
}

inline constexpr LaneLayout kAllLayouts[] = {LaneLayout::L1x32, LaneLayout::L2x16,     LaneLayout::L4x8,
                                             LaneLayout::L16x4, LaneLayout::H2x12_2x4, LaneLayout::H1x24_2x4};

}  // namespace flexpe::test
