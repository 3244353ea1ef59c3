#include "flexpe/cordic.hpp"

#include <cmath>
#include <cstdlib>
#include <map>
#include <sstream>
#include <tuple>

#include "flexpe/numfmt.hpp"

namespace flexpe {

std::vector<int> hyperbolic_shifts(int steps, HypSchedule schedule) {
    std::vector<int> out;
    out.reserve(static_cast<std::size_t>(std::max(steps, 0)));
    int next_repeat = 4;
    for (int i = 1; static_cast<int>(out.size()) < steps; ++i) {
        out.push_back(i);
        if (schedule == HypSchedule::repeated && i == next_repeat && static_cast<int>(out.size()) < steps) {
            out.push_back(i);
            next_repeat = 3 * next_repeat + 1;
        }
    }
    return out;
}

AngleTable hyperbolic_table(QFormat f, int steps, HypSchedule schedule) {
    AngleTable t;
    t.kind = AngleKind::hyperbolic;
    t.format = f;
    t.shifts = hyperbolic_shifts(steps, schedule);
    for (int i : t.shifts) {
        const double e = std::atanh(std::ldexp(1.0, -i));
        t.exact.push_back(e);
        t.entries.push_back(quantize(e, f));
    }
    return t;
}

AngleTable linear_table(QFormat f, int steps, int first_shift) {
    AngleTable t;
    t.kind = AngleKind::linear;
    t.format = f;
    for (int k = 0; k < steps; ++k) {
        const int i = first_shift + k;
        t.shifts.push_back(i);
        t.exact.push_back(std::ldexp(1.0, -i));
        t.entries.push_back(quantize(t.exact.back(), f));
    }
    return t;
}

AngleTable with_entries(AngleTable t, const std::vector<double>& values) {
    if (values.size() < t.size()) throw ContractError("with_entries: too few angle values");
    for (std::size_t k = 0; k < t.size(); ++k) {
        t.exact[k] = values[k];
        t.entries[k] = quantize(values[k], t.format);
    }
    return t;
}

std::string angle_table_csv(const AngleTable& t) {
    std::ostringstream os;
    os << "stage,shift,e_exact,e_real,e_raw,format\n";
    for (std::size_t k = 0; k < t.size(); ++k) {
        os << (k + 1) << ',' << t.shifts[k] << ',' << fmt_num(t.exact[k]) << ',' << fmt_num(t.entries[k].real())
           << ',' << t.entries[k].raw << ',' << t.format.str() << '\n';
    }
    return os.str();
}

namespace {

const AngleTable& cached_hyperbolic(QFormat f, int steps, HypSchedule s) {
    thread_local std::map<std::tuple<int, int, int, int>, AngleTable> cache;
    auto key = std::make_tuple(f.total_bits, f.frac_bits, steps, static_cast<int>(s));
    auto it = cache.find(key);
    if (it == cache.end()) it = cache.emplace(key, hyperbolic_table(f, steps, s)).first;
    return it->second;
}

const AngleTable& cached_linear(QFormat f, int steps, int first) {
    thread_local std::map<std::tuple<int, int, int, int>, AngleTable> cache;
    auto key = std::make_tuple(f.total_bits, f.frac_bits, steps, first);
    auto it = cache.find(key);
    if (it == cache.end()) it = cache.emplace(key, linear_table(f, steps, first)).first;
    return it->second;
}

void same_format(const CordicState& s) {
    if (!(s.x.format == s.y.format) || !(s.x.format == s.z.format))
        throw ContractError("CordicState components must share one QFormat");
}

void check_stages(int n) {
    if (n < 1) throw ContractError("stage count must be >= 1, got " + std::to_string(n));
}

}  // namespace

FxpValue hr_rail(QFormat f) { return quantize(CordicConstants::hr_limit, f); }
FxpValue lr_rail(QFormat f) { return quantize(CordicConstants::lr_limit, f); }

int direction_of(const CordicState& s, CordicMode mode) {
    if (mode.direction == Direction::rotation) return s.z.raw >= 0 ? 1 : -1;
    const int sx = s.x.raw >= 0 ? 1 : -1;
    const int sy = s.y.raw >= 0 ? 1 : -1;
    return -sx * sy;
}

CordicState cordic_step(const CordicState& s, CordicMode mode, const AngleTable& table) {
    same_format(s);
    if (mode.m == -1 && mode.direction != Direction::rotation)
        throw ContractError("hyperbolic mode is rotation-only here");
    if (s.stage_index < 1 || static_cast<std::size_t>(s.stage_index) > table.size())
        throw ContractError("stage_index " + std::to_string(s.stage_index) + " outside angle table");
    const QFormat f = s.x.format;
    const std::size_t k = static_cast<std::size_t>(s.stage_index - 1);
    const int i = table.shifts[k];
    const FxpValue e = convert(table.entries[k], f);
    const int d = direction_of(s, mode);

    CordicState n = s;
    if (mode.m != 0) n.x.raw = shift_add_rne(s.x.raw, -mode.m * d, s.y.raw, i, f);
    n.y.raw = shift_add_rne(s.y.raw, d, s.x.raw, i, f);
    n.z = d > 0 ? sat_sub(s.z, e) : sat_add(s.z, e);
    n.stage_index = s.stage_index + 1;
    n.last_d = d;
    return n;
}

namespace {

void check_range(const CordicState& s, CordicMode mode) {
    same_format(s);
    const QFormat f = s.x.format;
    if (mode.m == -1) {
        if (std::llabs(s.z.raw) > hr_rail(f).raw)
            throw RangeError("HR input |z| = " + fmt_num(std::fabs(s.z.real())) + " exceeds 1.1182");
    } else if (mode.direction == Direction::vectoring) {
        if (s.x.raw <= 0) throw RangeError("LV requires a positive denominator");
        if (std::llabs(s.y.raw) > s.x.raw) throw RangeError("LV requires |num| <= denom");
    } else {
        if (std::llabs(s.z.raw) > lr_rail(f).raw)
            throw RangeError("LR input |z| = " + fmt_num(std::fabs(s.z.real())) + " exceeds 7.968");
    }
}

CordicState run_steps(CordicState s, CordicMode mode, const AngleTable& table, int n) {
    s.stage_index = 1;
    for (int k = 0; k < n; ++k) s = cordic_step(s, mode, table);
    return s;
}

}  // namespace

CordicState run_iterative(const CordicState& init, CordicMode mode, const AngleTable& table, int n_stages) {
    check_stages(n_stages);
    check_range(init, mode);
    return run_steps(init, mode, table, n_stages);
}

std::vector<CordicState> run_trace(const CordicState& init, CordicMode mode, const AngleTable& table,
                                   int n_stages) {
    check_stages(n_stages);
    check_range(init, mode);
    std::vector<CordicState> out{init};
    out.back().stage_index = 1;
    for (int k = 0; k < n_stages; ++k) out.push_back(cordic_step(out.back(), mode, table));
    return out;
}

SinhCosh hr_sinh_cosh(const FxpValue& z, int stages, HypSchedule schedule) {
    check_stages(stages);
    const QFormat f = z.format;
    if (std::llabs(z.raw) > hr_rail(f).raw)
        throw RangeError("hr_sinh_cosh: |z| = " + fmt_num(std::fabs(z.real())) + " exceeds 1.1182");
    const bool neg = z.raw < 0;
    CordicState s{quantize(CordicConstants::inv_Kh_exact, f), FxpValue{0, f}, neg ? negate(z) : z};
    s = run_steps(s, kHyperbolicRotation, cached_hyperbolic(f, stages, schedule), stages);
    return {s.x, neg ? negate(s.y) : s.y};
}

FxpValue lv_divide_unchecked(const FxpValue& num, const FxpValue& denom, int stages) {
    CordicState s{denom, num, FxpValue{0, num.format}};
    return run_steps(s, kLinearVectoring, cached_linear(num.format, stages, 1), stages).z;
}

FxpValue lv_divide(const FxpValue& num, const FxpValue& denom, int stages) {
    check_stages(stages);
    if (!(num.format == denom.format)) throw ContractError("lv_divide: operand formats differ");
    check_range(CordicState{denom, num, FxpValue{0, num.format}}, kLinearVectoring);
    return lv_divide_unchecked(num, denom, stages);
}

FxpValue lr_mac_unchecked(const FxpValue& a, const FxpValue& z, const FxpValue& acc, int stages) {
    // The left-shift stages move up to ~8|a| through Y, so the engine carries
    // kLrGuardBits extra integer bits and saturates once on the way out.
    const QFormat f = a.format;
    const QFormat g{std::min(f.total_bits + kLrGuardBits, kMaxInternalBits), f.frac_bits};
    CordicState s{convert(a, g), convert(acc, g), convert(z, g)};
    return convert(run_steps(s, kLinearRotation, cached_linear(g, stages, -2), stages).y, f);
}

FxpValue lr_mac(const FxpValue& a, const FxpValue& z, const FxpValue& acc, int stages) {
    check_stages(stages);
    CordicState s{a, acc, z};
    check_range(s, kLinearRotation);
    return lr_mac_unchecked(a, z, acc, stages);
}

StagePlan default_stage_plan(int precision) {
    switch (precision) {
        case 4: return {4, 4, 4};
        case 8: return {4, 5, 8};
        case 12: return {4, 5, 12};
        case 16: return {4, 5, 16};
        case 24: return {8, 10, 24};
        case 32: return {8, 10, 32};
        default: throw ConfigError("no default stage plan for precision " + std::to_string(precision));
    }
}

void validate(const StagePlan& p) {
    auto ok = [&](int s) { return s >= 1 && s <= p.precision; };
    if (!ok(p.hyperbolic_stages) || !ok(p.linear_stages))
        throw ConfigError("stage plan (" + std::to_string(p.hyperbolic_stages) + "," +
                          std::to_string(p.linear_stages) + ") must lie in [1, " + std::to_string(p.precision) +
                          "]");
}

std::string to_string(HypSchedule s) { return s == HypSchedule::plain ? "plain" : "repeated"; }

HypSchedule parse_schedule(const std::string& s) {
    if (s == "plain") return HypSchedule::plain;
    if (s == "repeated") return HypSchedule::repeated;
    throw ParseError("unknown hyperbolic schedule: " + s);
}

}  // namespace flexpe
