#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "flexpe/cordic.hpp"

namespace flexpe {

enum class McFunction { sigmoid, tanh, exp, divide, mac, softmax };

std::string to_string(McFunction f);
McFunction parse_function(const std::string& s);

// Which stage count a sweep varies. `both` sets hyperbolic = linear = s.
enum class SweepAxis { hyperbolic, linear, both };
std::string to_string(SweepAxis a);
SweepAxis parse_axis(const std::string& s);
SweepAxis default_axis(McFunction f);

inline constexpr std::string_view kRngAlgorithm = "mt19937_64/u53";

// Uniform doubles from mt19937_64 using the top 53 bits, so the stream is
// identical on every standard library (std distributions are not).
class Uniform {
public:
    explicit Uniform(std::uint64_t seed) : eng_(seed) {}
    double unit() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }  // [0, 1)
    double range(double lo, double hi) { return lo + (hi - lo) * unit(); }

private:
    std::mt19937_64 eng_;
};

struct ErrorReport {
    McFunction function = McFunction::sigmoid;
    int precision = 16;
    int hyp_stages = 0;
    int lin_stages = 0;
    std::int64_t samples = 0;
    double mae = 0;
    double mse = 0;
    double max_abs_err = 0;
    std::uint64_t seed = 0;

    friend bool operator==(const ErrorReport&, const ErrorReport&) = default;
};

std::int64_t default_samples(int precision);  // 2^((N/2)+1)

ErrorReport mc_error(McFunction fn, int precision, const StagePlan& plan, std::uint64_t seed,
                     std::optional<std::int64_t> samples = std::nullopt);

struct StageRange {
    int first = 1;
    int last = 0;  // inclusive; last < first means empty
};
StageRange parse_stage_range(const std::string& s);  // "1:8" or "5"

std::vector<ErrorReport> pareto_sweep(McFunction fn, int precision, StageRange range, std::uint64_t seed,
                                      SweepAxis axis, HypSchedule schedule = HypSchedule::repeated);
std::vector<ErrorReport> pareto_sweep(McFunction fn, int precision, StageRange range, std::uint64_t seed = 1);

// Smallest stage count whose MAE is within lsb_floor of the last report's MAE.
std::size_t knee_index(std::span<const double> maes, double lsb_floor);
StagePlan knee_select(std::span<const ErrorReport> reports, double lsb_floor);

struct KneeResult {
    StagePlan knee;
    StagePlan paper_default;
    bool agrees = false;
};
// Hyperbolic sweep at the default linear stage count, then a linear sweep
// at the selected hyperbolic count.
KneeResult knee_plan(McFunction fn, int precision, std::uint64_t seed, double lsb_floor);

std::string reports_csv(std::span<const ErrorReport> rows);
std::string reports_csv_header();

}  // namespace flexpe
