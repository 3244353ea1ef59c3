#include "flexpe/error_harness.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "flexpe/flex_pe.hpp"
#include "flexpe/numfmt.hpp"

namespace flexpe {

std::string to_string(McFunction f) {
    switch (f) {
        case McFunction::sigmoid: return "sigmoid";
        case McFunction::tanh: return "tanh";
        case McFunction::exp: return "exp";
        case McFunction::divide: return "divide";
        case McFunction::mac: return "mac";
        case McFunction::softmax: return "softmax";
    }
    return "?";
}

McFunction parse_function(const std::string& s) {
    for (auto f : {McFunction::sigmoid, McFunction::tanh, McFunction::exp, McFunction::divide, McFunction::mac,
                   McFunction::softmax})
        if (to_string(f) == s) return f;
    throw ParseError("unknown function '" + s + "' (expected sigmoid, tanh, exp, divide, mac or softmax)");
}

std::string to_string(SweepAxis a) {
    switch (a) {
        case SweepAxis::hyperbolic: return "hyp";
        case SweepAxis::linear: return "lin";
        case SweepAxis::both: return "both";
    }
    return "?";
}

SweepAxis parse_axis(const std::string& s) {
    if (s == "hyp") return SweepAxis::hyperbolic;
    if (s == "lin") return SweepAxis::linear;
    if (s == "both") return SweepAxis::both;
    throw ParseError("unknown sweep axis '" + s + "' (expected hyp, lin or both)");
}

SweepAxis default_axis(McFunction f) {
    switch (f) {
        case McFunction::exp: return SweepAxis::hyperbolic;
        case McFunction::divide:
        case McFunction::mac: return SweepAxis::linear;
        default: return SweepAxis::both;
    }
}

std::int64_t default_samples(int precision) {
    if (precision < 2 || precision > 60) throw ContractError("precision out of range for sample count");
    return std::int64_t{1} << (precision / 2 + 1);
}

namespace {

struct Accum {
    double sum_abs = 0, sum_sq = 0, max_abs = 0;
    std::int64_t n = 0;
    void add(double err) {
        const double a = std::fabs(err);
        sum_abs += a;
        sum_sq += err * err;
        max_abs = std::max(max_abs, a);
        ++n;
    }
};

}  // namespace

ErrorReport mc_error(McFunction fn, int precision, const StagePlan& plan, std::uint64_t seed,
                     std::optional<std::int64_t> samples) {
    StagePlan p = plan;
    p.precision = precision;
    validate(p);
    const std::int64_t n = samples.value_or(default_samples(precision));
    if (n < 0) throw ContractError("negative sample count");

    const QFormat af = af_format(precision);
    const QFormat mf = mac_format(precision);
    const double hr = CordicConstants::hr_limit;
    Uniform rng(seed);
    Accum acc;
    std::int64_t vectors = 0;

    for (std::int64_t s = 0; s < n; ++s) {
        switch (fn) {
            case McFunction::sigmoid: {
                const double x = rng.range(-hr, hr);
                acc.add(af_sigmoid(quantize(x, af), p).real() - 1.0 / (1.0 + std::exp(-x)));
                break;
            }
            case McFunction::tanh: {
                const double x = rng.range(-hr, hr);
                acc.add(af_tanh(quantize(x, af), p).real() - std::tanh(x));
                break;
            }
            case McFunction::exp: {
                const double x = rng.range(-hr, hr);
                acc.add(af_exp(quantize(x, af), p).real() - std::exp(x));
                break;
            }
            case McFunction::divide: {
                const double q = rng.range(-1.0, 1.0);
                const double d = 1.0 - rng.unit();  // (0, 1]
                FxpValue dq = quantize(d, af);
                dq.raw = std::max<std::int64_t>(dq.raw, 1);
                FxpValue nq = quantize(q * d, af);
                nq.raw = std::clamp(nq.raw, -dq.raw, dq.raw);
                acc.add(lv_divide(nq, dq, p.linear_stages).real() - q);
                break;
            }
            case McFunction::mac: {
                const double z = rng.range(-CordicConstants::lr_limit, CordicConstants::lr_limit);
                const double a = rng.range(-1.0, 1.0);
                FxpValue zq = quantize(z, mf);
                const std::int64_t r = lr_rail(mf).raw;
                zq.raw = std::clamp(zq.raw, -r, r);
                acc.add(lr_mac(quantize(a, mf), zq, FxpValue{0, mf}, p.linear_stages).real() - a * z);
                break;
            }
            case McFunction::softmax: {
                constexpr int kLen = 4;
                double x[kLen];
                std::vector<FxpValue> xs;
                // half-width so every x - max stays inside the HR rail
                for (double& v : x) {
                    v = rng.range(-hr / 2, hr / 2);
                    xs.push_back(quantize(v, af));
                }
                const auto out = softmax_run(xs, p);
                const double mx = *std::max_element(x, x + kLen);
                double den = 0;
                for (double v : x) den += std::exp(v - mx);
                for (int k = 0; k < kLen; ++k) acc.add(out[k].real() - std::exp(x[k] - mx) / den);
                ++vectors;
                break;
            }
        }
    }

    ErrorReport r;
    r.function = fn;
    r.precision = precision;
    r.hyp_stages = p.hyperbolic_stages;
    r.lin_stages = p.linear_stages;
    r.samples = n;
    r.seed = seed;
    if (acc.n > 0) {
        r.mae = acc.sum_abs / static_cast<double>(acc.n);
        r.mse = acc.sum_sq / static_cast<double>(acc.n);
        r.max_abs_err = acc.max_abs;
    }
    return r;
}

StageRange parse_stage_range(const std::string& s) {
    try {
        const auto colon = s.find(':');
        if (colon == std::string::npos) {
            const int v = std::stoi(s);
            return {v, v};
        }
        return {std::stoi(s.substr(0, colon)), std::stoi(s.substr(colon + 1))};
    } catch (const std::logic_error&) {
        throw ParseError("stage range '" + s + "' is not of the form A:B");
    }
}

std::vector<ErrorReport> pareto_sweep(McFunction fn, int precision, StageRange range, std::uint64_t seed,
                                      SweepAxis axis, HypSchedule schedule) {
    std::vector<ErrorReport> out;
    if (range.last < range.first) return out;
    if (range.first < 1 || range.last > precision)
        throw ContractError("stage range " + std::to_string(range.first) + ":" + std::to_string(range.last) +
                            " must lie within [1, " + std::to_string(precision) + "]");
    const StagePlan base = default_stage_plan(precision);
    for (int s = range.first; s <= range.last; ++s) {
        StagePlan p = base;
        p.schedule = schedule;
        if (axis != SweepAxis::linear) p.hyperbolic_stages = s;
        if (axis != SweepAxis::hyperbolic) p.linear_stages = s;
        out.push_back(mc_error(fn, precision, p, seed));
    }
    return out;
}

std::vector<ErrorReport> pareto_sweep(McFunction fn, int precision, StageRange range, std::uint64_t seed) {
    return pareto_sweep(fn, precision, range, seed, default_axis(fn));
}

std::size_t knee_index(std::span<const double> maes, double lsb_floor) {
    if (maes.empty()) throw ContractError("knee_select: empty sweep");
    const double last = maes.back();
    for (std::size_t i = 0; i < maes.size(); ++i)
        if (maes[i] - last <= lsb_floor) return i;
    return maes.size() - 1;
}

StagePlan knee_select(std::span<const ErrorReport> reports, double lsb_floor) {
    if (reports.empty()) throw ContractError("knee_select: empty sweep");
    std::vector<double> maes;
    for (const auto& r : reports) maes.push_back(r.mae);
    const ErrorReport& k = reports[knee_index(maes, lsb_floor)];
    return StagePlan{k.hyp_stages, k.lin_stages, k.precision};
}

KneeResult knee_plan(McFunction fn, int precision, std::uint64_t seed, double lsb_floor) {
    const StageRange all{1, precision};
    const auto hyp = pareto_sweep(fn, precision, all, seed, SweepAxis::hyperbolic);
    const int h = knee_select(hyp, lsb_floor).hyperbolic_stages;

    std::vector<ErrorReport> lin;
    StagePlan p = default_stage_plan(precision);
    p.hyperbolic_stages = h;
    for (int s = 1; s <= precision; ++s) {
        p.linear_stages = s;
        lin.push_back(mc_error(fn, precision, p, seed));
    }
    KneeResult r;
    r.knee = knee_select(lin, lsb_floor);
    r.paper_default = default_stage_plan(precision);
    r.agrees = r.knee.hyperbolic_stages == r.paper_default.hyperbolic_stages &&
               r.knee.linear_stages == r.paper_default.linear_stages;
    return r;
}

std::string reports_csv_header() { return "function,precision,hyp_stages,lin_stages,samples,mae,mse,max_abs_err,seed"; }

std::string reports_csv(std::span<const ErrorReport> rows) {
    std::ostringstream os;
    os << reports_csv_header() << '\n';
    for (const auto& r : rows) {
        os << to_string(r.function) << ',' << r.precision << ',' << r.hyp_stages << ',' << r.lin_stages << ','
           << r.samples << ',' << fmt_num(r.mae) << ',' << fmt_num(r.mse) << ',' << fmt_num(r.max_abs_err) << ','
           << r.seed << '\n';
    }
    return os.str();
}

}  // namespace flexpe
