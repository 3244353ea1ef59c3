#include "flexpe/fixedpoint.hpp"

#include <cmath>
#include <limits>

namespace flexpe {

double QFormat::lsb() const { return std::ldexp(1.0, -frac_bits); }
double QFormat::max_real() const { return std::ldexp(static_cast<double>(max_raw()), -frac_bits); }
double QFormat::min_real() const { return std::ldexp(static_cast<double>(min_raw()), -frac_bits); }

std::string QFormat::str() const {
    return "Q(" + std::to_string(total_bits) + "," + std::to_string(frac_bits) + ")";
}

QFormat make_qformat(int total_bits, int frac_bits) {
    if (total_bits < 2 || total_bits > kMaxInternalBits)
        throw ContractError("QFormat total_bits out of range: " + std::to_string(total_bits));
    if (frac_bits < 0 || frac_bits > total_bits - 1)
        throw ContractError("QFormat frac_bits out of range: Q(" + std::to_string(total_bits) + "," +
                            std::to_string(frac_bits) + ")");
    return QFormat{total_bits, frac_bits};
}

bool is_lane_width(int bits) {
    switch (bits) {
        case 4: case 8: case 12: case 16: case 24: case 32: return true;
        default: return false;
    }
}

FxpValue FxpValue::from_raw(std::int64_t raw, QFormat f) {
    if (raw < f.min_raw() || raw > f.max_raw())
        throw ContractError("raw " + std::to_string(raw) + " does not fit " + f.str());
    return FxpValue{raw, f};
}

double FxpValue::real() const { return std::ldexp(static_cast<double>(raw), -format.frac_bits); }

std::int64_t saturate_raw(std::int64_t raw, QFormat f) {
    if (raw > f.max_raw()) return f.max_raw();
    if (raw < f.min_raw()) return f.min_raw();
    return raw;
}

FxpValue quantize(double x, QFormat f) {
    if (std::isnan(x)) return FxpValue{0, f};
    const double s = std::ldexp(x, f.frac_bits);  // exact scaling by a power of two
    if (s >= static_cast<double>(f.max_raw())) return FxpValue{f.max_raw(), f};
    if (s <= static_cast<double>(f.min_raw())) return FxpValue{f.min_raw(), f};
    double fl = std::floor(s);
    const double rem = s - fl;
    auto r = static_cast<std::int64_t>(fl);
    if (rem > 0.5 || (rem == 0.5 && (r & 1))) ++r;
    return FxpValue{saturate_raw(r, f), f};
}

double dequantize(const FxpValue& v) { return v.real(); }

FxpValue convert(const FxpValue& v, QFormat to) {
    const int df = to.frac_bits - v.format.frac_bits;
    std::int64_t r = 0;
    if (df >= 0) {
        // Exact widening; clamp first so the shift cannot overflow.
        const std::int64_t lim = std::int64_t{1} << (62 - df);
        const std::int64_t c = v.raw > lim ? lim : (v.raw < -lim ? -lim : v.raw);
        r = c * (std::int64_t{1} << df);
    } else {
        const ShifterOut o = shifter_stages(v.raw, -df);
        r = round_guarded(o.work, o.sticky);
    }
    return FxpValue{saturate_raw(r, to), to};
}

FxpValue sat_add_sub(const FxpValue& a, const FxpValue& b, AddSub op) {
    if (!(a.format == b.format))
        throw ContractError("sat_add_sub format mismatch: " + a.format.str() + " vs " + b.format.str());
    const std::int64_t r = op == AddSub::add ? a.raw + b.raw : a.raw - b.raw;
    return FxpValue{saturate_raw(r, a.format), a.format};
}

FxpValue negate(const FxpValue& v) { return FxpValue{saturate_raw(-v.raw, v.format), v.format}; }

ShifterOut shifter_stages(std::int64_t raw, int k) {
    if (k < 0) throw ContractError("negative shift amount");
    if (k > 63) k = 63;
    ShifterOut o{raw * 8, false};
    for (int s = 1; s <= 32; s <<= 1) {
        if (!(k & s)) continue;
        const std::int64_t lost = o.work & ((std::int64_t{1} << s) - 1);
        o.sticky = o.sticky || lost != 0;
        o.work >>= s;
    }
    return o;
}

std::int64_t round_guarded(std::int64_t work, bool sticky) {
    const std::int64_t q = work >> 3;
    const std::int64_t g = work & 7;
    const bool up = g > 4 || (g == 4 && (sticky || (q & 1)));
    return q + (up ? 1 : 0);
}

FxpValue barrel_shift_right(const FxpValue& v, int k) {
    const ShifterOut o = shifter_stages(v.raw, k);
    return FxpValue{saturate_raw(round_guarded(o.work, o.sticky), v.format), v.format};
}

std::int64_t shift_add_rne(std::int64_t acc, int d, std::int64_t x, int k, QFormat f) {
    if (k <= 0) {
        const std::int64_t shifted = x * (std::int64_t{1} << -k);
        return saturate_raw(d >= 0 ? acc + shifted : acc - shifted, f);
    }
    const ShifterOut o = shifter_stages(x, k);
    std::int64_t w = o.work;
    if (d < 0) {
        // -(w + eps) = (-w - 1) + (1 - eps): the sticky bit survives negation.
        w = -w - (o.sticky ? 1 : 0);
    }
    return saturate_raw(round_guarded(acc * 8 + w, o.sticky), f);
}

// ---- lanes ------------------------------------------------------------------

LaneConfig::LaneConfig(LaneLayout layout) : layout_(layout) {
    auto set = [this](std::initializer_list<int> ws) {
        count_ = 0;
        int off = 0;
        for (int w : ws) {
            widths_[count_] = w;
            offsets_[count_] = off;
            off += w;
            ++count_;
        }
    };
    switch (layout) {
        case LaneLayout::L1x32: set({32}); break;
        case LaneLayout::L2x16: set({16, 16}); break;
        case LaneLayout::L4x8: set({8, 8, 8, 8}); break;
        case LaneLayout::L16x4: set({4, 4, 4, 4, 4, 4, 4, 4}); break;
        case LaneLayout::H2x12_2x4: set({12, 12, 4, 4}); break;
        case LaneLayout::H1x24_2x4: set({24, 4, 4}); break;
    }
}

std::string LaneConfig::name() const {
    switch (layout_) {
        case LaneLayout::L1x32: return "L1x32";
        case LaneLayout::L2x16: return "L2x16";
        case LaneLayout::L4x8: return "L4x8";
        case LaneLayout::L16x4: return "L16x4";
        case LaneLayout::H2x12_2x4: return "H2x12_2x4";
        case LaneLayout::H1x24_2x4: return "H1x24_2x4";
    }
    return "?";
}

LaneLayout parse_layout(const std::string& s) {
    for (auto l : {LaneLayout::L1x32, LaneLayout::L2x16, LaneLayout::L4x8, LaneLayout::L16x4,
                   LaneLayout::H2x12_2x4, LaneLayout::H1x24_2x4})
        if (LaneConfig(l).name() == s) return l;
    throw ParseError("unknown lane layout: " + s);
}

namespace {

std::uint32_t lane_mask(int width) {
    return width >= 32 ? 0xFFFFFFFFu : ((1u << width) - 1u);
}

std::int64_t lane_raw(std::uint32_t word, int offset, int width) {
    const std::uint32_t bits = (word >> offset) & lane_mask(width);
    const std::int64_t v = bits;
    return (bits >> (width - 1)) & 1u ? v - (std::int64_t{1} << width) : v;
}

void check_word(const SimdWord& w) {
    if (w.formats.size() != w.lanes.size())
        throw ContractError("SimdWord has " + std::to_string(w.formats.size()) + " formats for " +
                            std::to_string(w.lanes.size()) + " lanes");
    for (std::size_t i = 0; i < w.lanes.size(); ++i)
        if (w.formats[i].total_bits != w.lanes.width(i))
            throw ContractError("lane " + std::to_string(i) + " format width mismatch");
}

}  // namespace

SimdWord pack_lanes(std::span<const FxpValue> values, const LaneConfig& cfg) {
    if (values.size() != cfg.size())
        throw ContractError("pack_lanes: " + std::to_string(values.size()) + " values for " + cfg.name());
    SimdWord w{0, cfg, {}};
    w.formats.reserve(values.size());
    for (std::size_t i = 0; i < values.size(); ++i) {
        const FxpValue& v = values[i];
        if (v.format.total_bits != cfg.width(i))
            throw ContractError("pack_lanes: lane " + std::to_string(i) + " expects " +
                                std::to_string(cfg.width(i)) + " bits, got " + v.format.str());
        if (v.raw < v.format.min_raw() || v.raw > v.format.max_raw())
            throw ContractError("pack_lanes: raw value out of range");
        w.raw |= (static_cast<std::uint32_t>(v.raw) & lane_mask(cfg.width(i))) << cfg.offset(i);
        w.formats.push_back(v.format);
    }
    return w;
}

std::vector<FxpValue> unpack_lanes(const SimdWord& w) {
    check_word(w);
    std::vector<FxpValue> out;
    out.reserve(w.lanes.size());
    for (std::size_t i = 0; i < w.lanes.size(); ++i)
        out.push_back(FxpValue{lane_raw(w.raw, w.lanes.offset(i), w.lanes.width(i)), w.formats[i]});
    return out;
}

SimdWord simd_add_sub(const SimdWord& a, const SimdWord& b, std::span<const AddSub> op_per_lane) {
    check_word(a);
    check_word(b);
    if (!(a.lanes == b.lanes)) throw ContractError("simd_add_sub: lane config mismatch");
    if (a.formats != b.formats) throw ContractError("simd_add_sub: lane format mismatch");
    if (op_per_lane.size() != a.lanes.size()) throw ContractError("simd_add_sub: one op per lane required");

    std::uint32_t out = 0;
    for (std::size_t l = 0; l < a.lanes.size(); ++l) {
        const int off = a.lanes.offset(l);
        const int w = a.lanes.width(l);
        const bool sub = op_per_lane[l] == AddSub::sub;
        std::uint32_t carry = sub ? 1u : 0u;  // chain restarts here: carry kill
        std::uint32_t carry_into_msb = 0;
        std::uint32_t lane = 0;
        for (int j = 0; j < w; ++j) {
            const std::uint32_t x = (a.raw >> (off + j)) & 1u;
            const std::uint32_t y = ((b.raw >> (off + j)) & 1u) ^ (sub ? 1u : 0u);
            if (j == w - 1) carry_into_msb = carry;
            lane |= (x ^ y ^ carry) << j;
            carry = (x & y) | (x & carry) | (y & carry);
        }
        if (carry_into_msb != carry) {
            const bool a_neg = (a.raw >> (off + w - 1)) & 1u;
            lane = a_neg ? (1u << (w - 1)) : (lane_mask(w) >> 1);
        }
        out |= (lane & lane_mask(w)) << off;
    }
    return SimdWord{out, a.lanes, a.formats};
}

SimdWord simd_barrel_shift(const SimdWord& w, std::span<const int> k_per_lane) {
    check_word(w);
    const std::size_t n = w.lanes.size();
    if (k_per_lane.size() != n) throw ContractError("simd_barrel_shift: one shift amount per lane required");

    // Each lane gets a slot of width+3 bits in a 64-bit work register (three
    // guard bits below the lane LSB). At most 32 + 8*3 = 56 bits.
    std::array<int, 8> pos{}, sw{};
    std::array<bool, 8> sticky{}, flush{};
    std::uint64_t work = 0;
    for (std::size_t i = 0; i < n; ++i) {
        if (k_per_lane[i] < 0) throw ContractError("negative shift amount");
        pos[i] = w.lanes.offset(i) + 3 * static_cast<int>(i);
        sw[i] = w.lanes.width(i) + 3;
        flush[i] = k_per_lane[i] >= w.lanes.width(i);
        const std::uint64_t bits = (w.raw >> w.lanes.offset(i)) & lane_mask(w.lanes.width(i));
        work |= (bits << 3) << pos[i];
    }
    auto field = [](int p, int width) {
        return width >= 64 ? ~std::uint64_t{0} : (((std::uint64_t{1} << width) - 1) << p);
    };

    for (int s = 1; s <= 16; s <<= 1) {
        std::uint64_t active = 0, keep = 0, fill = 0;
        for (std::size_t i = 0; i < n; ++i) {
            if (flush[i] || !(k_per_lane[i] & s)) continue;
            active |= field(pos[i], sw[i]);
            keep |= field(pos[i], sw[i] - s);
            if ((work >> (pos[i] + sw[i] - 1)) & 1u) fill |= field(pos[i] + sw[i] - s, s);
            if (work & field(pos[i], s)) sticky[i] = true;
        }
        work = (work & ~active) | (((work & active) >> s) & keep) | fill;
    }

    std::uint32_t out = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const int width = w.lanes.width(i);
        std::int64_t r = 0;
        if (!flush[i]) {
            std::int64_t slot = static_cast<std::int64_t>((work >> pos[i]) & field(0, sw[i]));
            if ((slot >> (sw[i] - 1)) & 1) slot -= std::int64_t{1} << sw[i];
            r = round_guarded(slot, sticky[i]);
        }
        out |= (static_cast<std::uint32_t>(r) & lane_mask(width)) << w.lanes.offset(i);
    }
    return SimdWord{out, w.lanes, w.formats};
}

}  // namespace flexpe
