#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "flexpe/error.hpp"

namespace flexpe {

// Signed two's-complement Q-format. Lane formats use the widths a SIMD word
// can hold; wider internal accumulators (carry/guard bits) go up to 56 bits
// so a raw value plus 3 shifter guard bits still fits an int64.
struct QFormat {
    int total_bits = 16;
    int frac_bits = 13;

    constexpr std::int64_t max_raw() const { return (std::int64_t{1} << (total_bits - 1)) - 1; }
    constexpr std::int64_t min_raw() const { return -(std::int64_t{1} << (total_bits - 1)); }
    double lsb() const;
    double max_real() const;
    double min_real() const;
    std::string str() const;  // "Q(16,13)"

    friend constexpr bool operator==(QFormat, QFormat) = default;
};

inline constexpr int kMaxInternalBits = 56;

// Validates 2 <= total <= 56 and 0 <= frac <= total-1.
QFormat make_qformat(int total_bits, int frac_bits);
bool is_lane_width(int bits);  // 4, 8, 12, 16, 24, 32

struct FxpValue {
    std::int64_t raw = 0;
    QFormat format{};

    static FxpValue from_raw(std::int64_t raw, QFormat f);  // throws if raw does not fit
    double real() const;

    friend bool operator==(const FxpValue&, const FxpValue&) = default;
};

// Round half to even, saturate at the rails. NaN maps to 0.
FxpValue quantize(double x, QFormat f);
double dequantize(const FxpValue& v);
std::int64_t saturate_raw(std::int64_t raw, QFormat f);
// Re-express v in format `to` (exact when the fraction grows, RNE otherwise), saturating.
FxpValue convert(const FxpValue& v, QFormat to);

enum class AddSub { add, sub };

FxpValue sat_add_sub(const FxpValue& a, const FxpValue& b, AddSub op);
inline FxpValue sat_add(const FxpValue& a, const FxpValue& b) { return sat_add_sub(a, b, AddSub::add); }
inline FxpValue sat_sub(const FxpValue& a, const FxpValue& b) { return sat_add_sub(a, b, AddSub::sub); }
FxpValue negate(const FxpValue& v);  // saturating: -min_raw -> max_raw

// Output of the log shifter before its final rounding: floor(v / 2^k) with
// the three bits below the binary point kept and everything further down
// ORed into a sticky flag.
struct ShifterOut {
    std::int64_t work = 0;  // value * 8, i.e. 3 guard bits at the bottom
    bool sticky = false;
};

// Composition of conditional stages 1,2,4,8,16 (and 32 for wide words).
ShifterOut shifter_stages(std::int64_t raw, int k);
// Round-half-even of work/8 (+ sticky).
std::int64_t round_guarded(std::int64_t work, bool sticky);

FxpValue barrel_shift_right(const FxpValue& v, int k);

// RNE(acc + d * x * 2^-k) with a single rounding point: the shifter's guard
// and sticky bits go straight into the adder. k < 0 means an exact left shift.
// Saturates to f.
std::int64_t shift_add_rne(std::int64_t acc, int d, std::int64_t x, int k, QFormat f);

// ---- packed SIMD words ------------------------------------------------------

enum class LaneLayout { L1x32, L2x16, L4x8, L16x4, H2x12_2x4, H1x24_2x4 };

class LaneConfig {
public:
    constexpr LaneConfig() = default;
    explicit LaneConfig(LaneLayout layout);

    LaneLayout layout() const { return layout_; }
    std::span<const int> widths() const { return {widths_.data(), count_}; }
    int width(std::size_t i) const { return widths_.at(i); }
    int offset(std::size_t i) const { return offsets_.at(i); }
    std::size_t size() const { return count_; }
    std::string name() const;

    friend bool operator==(const LaneConfig& a, const LaneConfig& b) { return a.layout_ == b.layout_; }

private:
    LaneLayout layout_ = LaneLayout::L1x32;
    std::array<int, 8> widths_{32};
    std::array<int, 8> offsets_{0};
    std::size_t count_ = 1;
};

LaneLayout parse_layout(const std::string& s);

struct SimdWord {
    std::uint32_t raw = 0;
    LaneConfig lanes;
    std::vector<QFormat> formats;  // one per lane, total_bits == lane width

    friend bool operator==(const SimdWord&, const SimdWord&) = default;
};

SimdWord pack_lanes(std::span<const FxpValue> values, const LaneConfig& cfg);
std::vector<FxpValue> unpack_lanes(const SimdWord& w);

// Bit-serial ripple-carry model with the carry killed at every lane boundary.
SimdWord simd_add_sub(const SimdWord& a, const SimdWord& b, std::span<const AddSub> op_per_lane);

// Five-stage lane-isolated shifter. Shift amounts >= the lane width flush the
// lane to 0, which is also where round-half-even lands (|v/2^k| <= 1/2).
SimdWord simd_barrel_shift(const SimdWord& w, std::span<const int> k_per_lane);

}  // namespace flexpe
