#include "flexpe/flex_pe.hpp"

#include <algorithm>
#include <bit>

namespace flexpe {

std::string to_string(Precision p) {
    switch (p) {
        case Precision::FxP4: return "FxP4";
        case Precision::FxP8: return "FxP8";
        case Precision::FxP16: return "FxP16";
        case Precision::FxP32: return "FxP32";
        case Precision::H12: return "H12";
        case Precision::H24: return "H24";
    }
    return "?";
}

std::string to_string(AfSel a) {
    switch (a) {
        case AfSel::sigmoid: return "sigmoid";
        case AfSel::tanh: return "tanh";
        case AfSel::relu: return "relu";
        case AfSel::softmax: return "softmax";
        case AfSel::exp: return "exp";
    }
    return "?";
}

Precision precision_from_bits(int bits) {
    switch (bits) {
        case 4: return Precision::FxP4;
        case 8: return Precision::FxP8;
        case 16: return Precision::FxP16;
        case 32: return Precision::FxP32;
        case 12: return Precision::H12;
        case 24: return Precision::H24;
        default: throw ConfigError("unsupported precision " + std::to_string(bits));
    }
}

Precision parse_precision(const std::string& s) {
    std::string t = s;
    if (t.rfind("FxP", 0) == 0 || t.rfind("fxp", 0) == 0) t = t.substr(3);
    if (!t.empty() && (t[0] == 'H' || t[0] == 'h')) t = t.substr(1);
    try {
        std::size_t used = 0;
        const int bits = std::stoi(t, &used);
        if (used == t.size()) return precision_from_bits(bits);
    } catch (const std::logic_error&) {
    }
    throw ParseError("unknown precision '" + s + "' (expected 4, 8, 16, 32, H12 or H24)");
}

AfSel parse_af(const std::string& s) {
    for (auto a : {AfSel::sigmoid, AfSel::tanh, AfSel::relu, AfSel::softmax, AfSel::exp})
        if (to_string(a) == s) return a;
    throw ParseError("unknown activation '" + s + "' (expected sigmoid, tanh, relu, softmax or exp)");
}

int precision_bits(Precision p) {
    switch (p) {
        case Precision::FxP4: return 4;
        case Precision::FxP8: return 8;
        case Precision::FxP16: return 16;
        case Precision::FxP32: return 32;
        case Precision::H12: return 12;
        case Precision::H24: return 24;
    }
    return 0;
}

QFormat af_format(int bits) {
    if (bits == 4) return make_qformat(4, 2);
    return make_qformat(bits, bits - 3);
}

QFormat mac_format(int bits) { return make_qformat(bits, bits - 4); }

QFormat wide_format(QFormat af) { return make_qformat(af.total_bits + 2, af.frac_bits); }

QFormat sum_format(QFormat af, std::size_t capacity) {
    const int guard = static_cast<int>(std::bit_width(std::max<std::size_t>(capacity, 2) - 1));
    return make_qformat(af.total_bits + 2 + guard, af.frac_bits);
}

LaneConfig lanes_for(Precision p) {
    switch (p) {
        case Precision::FxP4: return LaneConfig(LaneLayout::L16x4);
        case Precision::FxP8: return LaneConfig(LaneLayout::L4x8);
        case Precision::FxP16: return LaneConfig(LaneLayout::L2x16);
        case Precision::FxP32: return LaneConfig(LaneLayout::L1x32);
        case Precision::H12: return LaneConfig(LaneLayout::H2x12_2x4);
        case Precision::H24: return LaneConfig(LaneLayout::H1x24_2x4);
    }
    return LaneConfig{};
}

int lanes_per_issue(Precision p) {
    switch (p) {
        case Precision::FxP4: return 16;
        case Precision::FxP8: return 8;
        case Precision::FxP16: return 4;
        case Precision::FxP32: return 1;
        case Precision::H12: return 8;
        case Precision::H24: return 6;
    }
    return 1;
}

PeConfig PeConfig::make(Precision p, AfSel af, CtrlOp op, ExecMode mode) {
    PeConfig c;
    c.precision = p;
    c.sel_af = af;
    c.ctrl_op = op;
    c.exec_mode = mode;
    c.stage_plan = default_stage_plan(precision_bits(p));
    return c;
}

void validate(const PeConfig& cfg) {
    validate(cfg.stage_plan);
    if (cfg.ctrl_op == CtrlOp::af && cfg.sel_af == AfSel::softmax) {
        if (cfg.precision != Precision::FxP8 && cfg.precision != Precision::FxP16 &&
            cfg.precision != Precision::FxP32)
            throw ConfigError("softmax@" + to_string(cfg.precision) + " is not supported: softmax requires FxP8, "
                              "FxP16 or FxP32");
        if (cfg.exec_mode != ExecMode::pipelined)
            throw ConfigError("softmax requires pipelined mode (iterative mode has no FIFO path)");
    }
    if (cfg.folded) {
        if (cfg.exec_mode != ExecMode::pipelined)
            throw ConfigError("stage folding requires pipelined mode");
        if (cfg.precision != Precision::FxP8 && cfg.precision != Precision::FxP16)
            throw ConfigError("stage folding applies to FxP8/FxP16 on FxP32 hardware only");
    }
}

namespace {

FxpValue clamp_hr(const FxpValue& z) {
    const std::int64_t r = hr_rail(z.format).raw;
    return FxpValue{std::clamp(z.raw, -r, r), z.format};
}

StagePlan lane_plan(const StagePlan& p, int width) {
    StagePlan q = p;
    q.hyperbolic_stages = std::min(p.hyperbolic_stages, width);
    q.linear_stages = std::min(p.linear_stages, width);
    q.precision = width;
    return q;
}

}  // namespace

FxpValue af_exp(const FxpValue& z, const StagePlan& plan) {
    const SinhCosh sc = hr_sinh_cosh(clamp_hr(z), plan.hyperbolic_stages, plan.schedule);
    const QFormat w = wide_format(z.format);
    return sat_add(convert(sc.cosh, w), convert(sc.sinh, w));
}

FxpValue af_sigmoid(const FxpValue& z, const StagePlan& plan) {
    FxpValue e = af_exp(z, plan);
    if (e.raw < 0) e.raw = 0;
    // Denominator source mux: constant 1 here, the FIFO sum for softmax.
    const FxpValue den = sat_add(quantize(1.0, e.format), e);
    const FxpValue q = lv_divide_unchecked(e, den, plan.linear_stages);
    return convert(q, z.format);
}

FxpValue af_tanh(const FxpValue& z, const StagePlan& plan) {
    const FxpValue zc = clamp_hr(z);
    const bool neg = zc.raw < 0;
    const SinhCosh sc = hr_sinh_cosh(neg ? negate(zc) : zc, plan.hyperbolic_stages, plan.schedule);
    FxpValue num = sc.sinh;
    num.raw = std::clamp(num.raw, -sc.cosh.raw, sc.cosh.raw);
    const FxpValue q = lv_divide_unchecked(num, sc.cosh, plan.linear_stages);
    return neg ? negate(q) : q;
}

FxpValue af_relu(const FxpValue& v) { return v.raw < 0 ? FxpValue{0, v.format} : v; }

SimdWord af_relu(const SimdWord& w) {
    // Per-lane mux on the lane sign bit.
    std::uint32_t keep = 0;
    for (std::size_t i = 0; i < w.lanes.size(); ++i) {
        const int off = w.lanes.offset(i);
        const int width = w.lanes.width(i);
        if (!((w.raw >> (off + width - 1)) & 1u)) {
            const std::uint32_t m = width >= 32 ? 0xFFFFFFFFu : ((1u << width) - 1u);
            keep |= m << off;
        }
    }
    return SimdWord{w.raw & keep, w.lanes, w.formats};
}

SoftmaxFifo::SoftmaxFifo(QFormat entry_format, std::size_t capacity)
    : entry_format_(entry_format),
      capacity_(capacity),
      sum_{0, make_qformat(entry_format.total_bits +
                               static_cast<int>(std::bit_width(std::max<std::size_t>(capacity, 2) - 1)),
                           entry_format.frac_bits)} {
    if (capacity == 0) throw CapacityError("softmax FIFO capacity must be positive");
}

void SoftmaxFifo::push(const FxpValue& e) {
    if (!(e.format == entry_format_)) throw ContractError("softmax FIFO entry format mismatch");
    if (e.raw < 0) throw ContractError("softmax FIFO entries must be non-negative");
    if (entries_.size() >= capacity_)
        throw CapacityError("softmax FIFO overflow: capacity " + std::to_string(capacity_));
    entries_.push_back(e);
    sum_ = sat_add(sum_, convert(e, sum_.format));
}

FxpValue SoftmaxFifo::pop() {
    if (entries_.empty()) throw CapacityError("softmax FIFO underflow");
    FxpValue e = entries_.front();
    entries_.pop_front();
    sum_ = sat_sub(sum_, convert(e, sum_.format));
    return e;
}

std::vector<FxpValue> softmax_run(std::span<const FxpValue> xs, const StagePlan& plan, std::size_t capacity) {
    if (xs.size() > capacity)
        throw CapacityError("softmax input of " + std::to_string(xs.size()) + " exceeds FIFO capacity " +
                            std::to_string(capacity));
    if (xs.empty()) return {};
    const QFormat f = xs[0].format;
    for (const auto& x : xs)
        if (!(x.format == f)) throw ContractError("softmax inputs must share one format");
    if (f.total_bits < 8) throw ConfigError("softmax requires FxP8 or wider");

    std::int64_t mx = xs[0].raw;
    for (const auto& x : xs) mx = std::max(mx, x.raw);
    const FxpValue fmax{mx, f};
    const std::int64_t rail = hr_rail(f).raw;

    SoftmaxFifo fifo(wide_format(f), capacity);
    for (const auto& x : xs) {
        FxpValue t = sat_sub(x, fmax);
        t.raw = std::max(t.raw, -rail);
        FxpValue e = af_exp(t, plan);
        if (e.raw < 0) e.raw = 0;
        fifo.push(e);
    }
    const FxpValue total = fifo.running_sum();
    std::vector<FxpValue> out;
    out.reserve(xs.size());
    while (fifo.size() > 0) {
        const FxpValue e = convert(fifo.pop(), total.format);
        out.push_back(convert(lv_divide_unchecked(e, total, plan.linear_stages), f));
    }
    return out;
}

namespace {

void check_lanes(const SimdWord& w, const PeConfig& cfg, bool mac) {
    if (!(w.lanes == lanes_for(cfg.precision)))
        throw ContractError("word layout " + w.lanes.name() + " does not match " + to_string(cfg.precision));
    if (w.formats.size() != w.lanes.size()) throw ContractError("word lane formats missing");
    for (std::size_t i = 0; i < w.lanes.size(); ++i) {
        const QFormat want = mac ? mac_format(w.lanes.width(i)) : af_format(w.lanes.width(i));
        if (!(w.formats[i] == want))
            throw ContractError("lane " + std::to_string(i) + " format " + w.formats[i].str() + ", expected " +
                                want.str());
    }
}

}  // namespace

SimdWord pe_execute(const SimdWord& w, const PeConfig& cfg) {
    validate(cfg);
    if (cfg.ctrl_op != CtrlOp::af) throw ConfigError("MAC mode needs operand and accumulator words");
    check_lanes(w, cfg, false);
    if (cfg.sel_af == AfSel::relu) return af_relu(w);

    std::vector<FxpValue> v = unpack_lanes(w);
    if (cfg.sel_af == AfSel::softmax) {
        v = softmax_run(v, cfg.stage_plan);
    } else {
        for (std::size_t i = 0; i < v.size(); ++i) {
            const StagePlan p = lane_plan(cfg.stage_plan, w.lanes.width(i));
            switch (cfg.sel_af) {
                case AfSel::sigmoid: v[i] = af_sigmoid(v[i], p); break;
                case AfSel::tanh: v[i] = af_tanh(v[i], p); break;
                case AfSel::exp: v[i] = convert(af_exp(v[i], p), v[i].format); break;
                default: break;
            }
        }
    }
    return pack_lanes(v, w.lanes);
}

SimdWord pe_execute(const SimdWord& a, const SimdWord& z, const SimdWord& acc, const PeConfig& cfg) {
    validate(cfg);
    if (cfg.ctrl_op != CtrlOp::mac) throw ConfigError("three-operand dispatch requires ctrl_op = mac");
    check_lanes(a, cfg, true);
    check_lanes(z, cfg, true);
    check_lanes(acc, cfg, true);
    const auto va = unpack_lanes(a), vz = unpack_lanes(z), vc = unpack_lanes(acc);
    std::vector<FxpValue> out(va.size());
    for (std::size_t i = 0; i < va.size(); ++i)
        out[i] = lr_mac(va[i], vz[i], vc[i], lane_plan(cfg.stage_plan, a.lanes.width(i)).linear_stages);
    return pack_lanes(out, a.lanes);
}

int op_depth(const PeConfig& cfg) {
    const StagePlan& p = cfg.stage_plan;
    if (cfg.ctrl_op == CtrlOp::mac) return p.linear_stages;
    switch (cfg.sel_af) {
        case AfSel::relu: return 1;
        case AfSel::exp: return p.hyperbolic_stages;
        default: return p.hyperbolic_stages + p.linear_stages;
    }
}

PipelineTiming pipeline_timing(const PeConfig& cfg, std::int64_t n_inputs) {
    validate(cfg);
    if (n_inputs < 0) throw ContractError("negative input count");
    PipelineTiming t;
    t.results_per_issue = lanes_per_issue(cfg.precision) * (cfg.folded ? 2 : 1);
    t.issues = (n_inputs + t.results_per_issue - 1) / t.results_per_issue;
    t.results_ready = n_inputs;
    const int depth = op_depth(cfg);
    const bool relu = cfg.ctrl_op == CtrlOp::af && cfg.sel_af == AfSel::relu;
    t.in_flight.assign(static_cast<std::size_t>(depth), 0);

    if (cfg.exec_mode == ExecMode::pipelined) {
        // Two-cycle operand load per issue, then one stage per cycle.
        t.fill_depth = relu ? 1 : depth + 2;
        t.cycles_elapsed = t.fill_depth + 2 * t.issues;
        const std::int64_t mid = t.cycles_elapsed / 2;
        for (std::int64_t q = 0; q < t.issues; ++q) {
            const std::int64_t stage = mid - (2 * q + 2);
            if (stage >= 0 && stage < depth) t.in_flight[static_cast<std::size_t>(stage)] += t.results_per_issue;
        }
    } else {
        // One engine, no overlap: every issue walks all stages serially.
        t.fill_depth = 0;
        t.cycles_elapsed = t.issues * depth;
        if (t.issues > 0) t.in_flight[static_cast<std::size_t>((t.cycles_elapsed / 2) % depth)] =
            t.results_per_issue;
    }
    return t;
}

}  // namespace flexpe
