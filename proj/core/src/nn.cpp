#include "flexpe/nn.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "flexpe/container.hpp"
#include "flexpe/numfmt.hpp"
#include "flexpe/systolic.hpp"

namespace flexpe {

std::string to_string(LayerKind k) {
    switch (k) {
        case LayerKind::dense: return "dense";
        case LayerKind::conv: return "conv";
        case LayerKind::relu: return "relu";
        case LayerKind::sigmoid: return "sigmoid";
        case LayerKind::tanh: return "tanh";
        case LayerKind::softmax: return "softmax";
    }
    return "?";
}

LayerKind parse_layer_kind(const std::string& s) {
    for (auto k : {LayerKind::dense, LayerKind::conv, LayerKind::relu, LayerKind::sigmoid, LayerKind::tanh,
                   LayerKind::softmax})
        if (to_string(k) == s) return k;
    throw ParseError("unknown layer kind '" + s + "'");
}

bool has_weights(LayerKind k) { return k == LayerKind::dense || k == LayerKind::conv; }

namespace {

std::size_t volume(const std::vector<int>& s) {
    return std::accumulate(s.begin(), s.end(), std::size_t{1},
                           [](std::size_t a, int b) { return a * static_cast<std::size_t>(b); });
}

double to_double(const std::string& s, const std::string& what) {
    try {
        std::size_t used = 0;
        const double v = std::stod(s, &used);
        if (used == s.size()) return v;
    } catch (const std::logic_error&) {
    }
    throw ParseError("bad " + what + ": '" + s + "'");
}

int to_int(const std::string& s, const std::string& what) {
    const double v = to_double(s, what);
    if (v != std::floor(v) || std::abs(v) > 1e9) throw ParseError("bad " + what + ": '" + s + "'");
    return static_cast<int>(v);
}

std::string shape_str(const std::vector<int>& s) { return s.empty() ? "?" : format_dims(s); }

std::vector<double> widen(const std::vector<float>& v) { return {v.begin(), v.end()}; }

std::vector<float> narrow(const std::vector<double>& v) {
    std::vector<float> out(v.size());
    std::transform(v.begin(), v.end(), out.begin(), [](double x) { return static_cast<float>(x); });
    return out;
}

AfSel af_of(LayerKind k) {
    switch (k) {
        case LayerKind::relu: return AfSel::relu;
        case LayerKind::sigmoid: return AfSel::sigmoid;
        case LayerKind::tanh: return AfSel::tanh;
        case LayerKind::softmax: return AfSel::softmax;
        default: throw ContractError("layer has no activation function");
    }
}

}  // namespace

std::size_t Dataset::features() const { return volume(input_shape); }

std::span<const double> Dataset::sample(std::size_t i) const {
    const std::size_t f = features();
    return std::span<const double>(inputs).subspan(i * f, f);
}

void validate(const ModelSpec& m) {
    if (m.input_shape.empty() || volume(m.input_shape) == 0) throw ShapeError("model input shape is empty");
    if (m.layers.empty()) throw ShapeError("model has no layers");
    std::vector<int> cur = m.input_shape;
    std::string prev = "input";
    for (std::size_t i = 0; i < m.layers.size(); ++i) {
        const LayerSpec& l = m.layers[i];
        const std::string who = "layer '" + l.name + "'";
        if (l.kind == LayerKind::dense) {
            if (l.in_shape.size() != 1 || l.out_shape.size() != 1)
                throw ShapeError(who + ": dense layers need 1-D in/out shapes");
            if (volume(cur) != volume(l.in_shape))
                throw ShapeError(who + " expects " + shape_str(l.in_shape) + " inputs but '" + prev + "' produces " +
                                 shape_str(cur));
            if (l.weight.size() != volume(l.in_shape) * volume(l.out_shape))
                throw ShapeError(who + ": weight has " + std::to_string(l.weight.size()) + " entries, expected " +
                                 shape_str(l.out_shape) + "x" + shape_str(l.in_shape));
        } else if (l.kind == LayerKind::conv) {
            if (l.in_shape != cur)
                throw ShapeError(who + " expects " + shape_str(l.in_shape) + " but '" + prev + "' produces " +
                                 shape_str(cur));
            l.conv.validate();
            const std::vector<int> want_in{l.conv.C_in, l.conv.H, l.conv.W};
            const std::vector<int> want_out{l.conv.C_out, l.conv.out_h(), l.conv.out_w()};
            if (l.in_shape != want_in || l.out_shape != want_out)
                throw ShapeError(who + ": shapes " + shape_str(l.in_shape) + " -> " + shape_str(l.out_shape) +
                                 " do not match the kernel geometry (" + shape_str(want_in) + " -> " +
                                 shape_str(want_out) + ")");
            if (l.weight.size() != static_cast<std::size_t>(l.conv.weight_elems()))
                throw ShapeError(who + ": weight entry count does not match C_out x C_in x K x K");
        } else {
            if (!l.in_shape.empty() && l.in_shape != cur)
                throw ShapeError(who + " expects " + shape_str(l.in_shape) + " but '" + prev + "' produces " +
                                 shape_str(cur));
            if (l.kind == LayerKind::softmax && i + 1 != m.layers.size())
                throw ShapeError(who + ": softmax must be the final layer");
        }
        if (has_weights(l.kind)) {
            const std::size_t outs = l.kind == LayerKind::dense ? volume(l.out_shape) : std::size_t(l.conv.C_out);
            if (!l.bias.empty() && l.bias.size() != outs)
                throw ShapeError(who + ": bias has " + std::to_string(l.bias.size()) + " entries, expected " +
                                 std::to_string(outs));
            if (!(l.psum_max > 0) || !std::isfinite(l.psum_max))
                throw ShapeError(who + ": scale factor psum_max must be > 0");
            for (double w : l.weight)
                if (!std::isfinite(w)) throw ShapeError(who + ": non-finite weight");
            cur = l.out_shape;
        }
        prev = l.name;
    }
}

ModelSpec parse_model(const std::string& bytes, const std::string& origin) {
    const Container c = parse_container(bytes, origin);
    if (c.kind != "model") throw ParseError(origin + ": container kind is '" + c.kind + "', expected model");
    ModelSpec m;
    m.digest = c.digest;
    std::vector<int> cur;
    bool have_header = false;
    for (const auto& rec : c.records) {
        if (rec[0] == "model") {
            m.name = record_value(rec, "name");
            m.input_shape = parse_dims(record_value(rec, "input"));
            cur = m.input_shape;
            have_header = true;
        } else if (rec[0] == "layer") {
            if (!have_header) throw ParseError(origin + ": layer record before the model record");
            LayerSpec l;
            l.kind = parse_layer_kind(record_value(rec, "kind"));
            l.name = record_value(rec, "name");
            if (has_weights(l.kind)) {
                l.in_shape = parse_dims(record_value(rec, "in"));
                l.out_shape = parse_dims(record_value(rec, "out"));
                l.weight_name = record_value(rec, "weight");
                l.weight = widen(c.f32(l.weight_name));
                if (record_has(rec, "bias")) {
                    l.bias_name = record_value(rec, "bias");
                    l.bias = widen(c.f32(l.bias_name));
                }
                l.psum_max = to_double(record_value(rec, "psum_max"), "psum_max");
                if (l.kind == LayerKind::conv) {
                    if (l.in_shape.size() != 3 || l.out_shape.size() != 3)
                        throw ShapeError("layer '" + l.name + "': conv shapes must be CxHxW");
                    l.conv.C_in = l.in_shape[0];
                    l.conv.H = l.in_shape[1];
                    l.conv.W = l.in_shape[2];
                    l.conv.C_out = l.out_shape[0];
                    l.conv.K = to_int(record_value(rec, "k"), "kernel size");
                    l.conv.stride = record_has(rec, "stride") ? to_int(record_value(rec, "stride"), "stride") : 1;
                    l.conv.pad = record_has(rec, "pad") ? to_int(record_value(rec, "pad"), "pad") : 0;
                }
                cur = l.out_shape;
            } else {
                l.in_shape = cur;
                l.out_shape = cur;
            }
            m.layers.push_back(std::move(l));
        } else {
            throw ParseError(origin + ": unknown record '" + rec[0] + "'");
        }
    }
    if (!have_header) throw ParseError(origin + ": missing model record");
    validate(m);
    return m;
}

ModelSpec load_model(const std::string& path) {
    const Container c = read_container(path);
    return parse_model(serialize_container(c), path);
}

std::string serialize_model(const ModelSpec& m) {
    validate(m);
    Container c;
    c.kind = "model";
    c.records.push_back({"model", "name=" + m.name, "input=" + format_dims(m.input_shape)});
    for (const auto& l : m.layers) {
        std::vector<std::string> rec{"layer", "kind=" + to_string(l.kind), "name=" + l.name};
        if (has_weights(l.kind)) {
            const std::string wn = l.weight_name.empty() ? l.name + ".w" : l.weight_name;
            const std::string bn = l.bias_name.empty() ? l.name + ".b" : l.bias_name;
            rec.push_back("in=" + format_dims(l.in_shape));
            rec.push_back("out=" + format_dims(l.out_shape));
            if (l.kind == LayerKind::conv) {
                rec.push_back("k=" + std::to_string(l.conv.K));
                rec.push_back("stride=" + std::to_string(l.conv.stride));
                rec.push_back("pad=" + std::to_string(l.conv.pad));
            }
            rec.push_back("weight=" + wn);
            const auto w = narrow(l.weight);
            if (l.kind == LayerKind::dense)
                c.add_f32(wn, {l.out_shape[0], l.in_shape[0]}, w);
            else
                c.add_f32(wn, {l.conv.C_out, l.conv.C_in, l.conv.K, l.conv.K}, w);
            if (!l.bias.empty()) {
                rec.push_back("bias=" + bn);
                const auto b = narrow(l.bias);
                c.add_f32(bn, {static_cast<int>(b.size())}, b);
            }
            rec.push_back("psum_max=" + fmt_num(l.psum_max));
        }
        c.records.push_back(std::move(rec));
    }
    return serialize_container(std::move(c));
}

void save_model(const std::string& path, const ModelSpec& m) {
    write_container(path, parse_container(serialize_model(m)));
}

Dataset parse_dataset(const std::string& bytes, const std::string& origin) {
    const Container c = parse_container(bytes, origin);
    if (c.kind != "dataset") throw ParseError(origin + ": container kind is '" + c.kind + "', expected dataset");
    Dataset d;
    d.digest = c.digest;
    bool have_header = false;
    for (const auto& rec : c.records) {
        if (rec[0] != "dataset") throw ParseError(origin + ": unknown record '" + rec[0] + "'");
        d.name = record_value(rec, "name");
        d.input_shape = parse_dims(record_value(rec, "input"));
        have_header = true;
    }
    if (!have_header) throw ParseError(origin + ": missing dataset record");
    d.inputs = widen(c.f32("inputs"));
    const auto labels = c.i32("labels");
    d.labels.assign(labels.begin(), labels.end());
    if (d.inputs.size() != d.labels.size() * d.features())
        throw ShapeError(origin + ": " + std::to_string(d.inputs.size()) + " input values for " +
                         std::to_string(d.labels.size()) + " labels of shape " + format_dims(d.input_shape));
    for (double v : d.inputs)
        if (!std::isfinite(v)) throw ParseError(origin + ": non-finite input value");
    return d;
}

Dataset load_dataset(const std::string& path) {
    const Container c = read_container(path);
    return parse_dataset(serialize_container(c), path);
}

std::string serialize_dataset(const Dataset& d) {
    if (d.inputs.size() != d.labels.size() * d.features()) throw ShapeError("dataset inputs do not match labels");
    Container c;
    c.kind = "dataset";
    c.records.push_back({"dataset", "name=" + d.name, "input=" + format_dims(d.input_shape)});
    const auto in = narrow(d.inputs);
    c.add_f32("inputs", {static_cast<int>(d.labels.size()), static_cast<int>(d.features())}, in);
    const std::vector<std::int32_t> labels(d.labels.begin(), d.labels.end());
    c.add_i32("labels", {static_cast<int>(labels.size())}, labels);
    return serialize_container(std::move(c));
}

void save_dataset(const std::string& path, const Dataset& d) {
    write_container(path, parse_container(serialize_dataset(d)));
}

double QuantizedTensor::real(std::size_t i) const { return static_cast<double>(raw[i]) * format.lsb() * scale; }

QuantizedTensor quantize_tensor(std::span<const double> t, QFormat f, double rail) {
    if (!(rail > 0)) throw ContractError("quantize_tensor: rail must be > 0");
    double max_abs = 0;
    for (double v : t) {
        if (!std::isfinite(v)) throw ContractError("quantize_tensor: non-finite entry");
        max_abs = std::max(max_abs, std::abs(v));
    }
    QuantizedTensor q;
    q.format = f;
    q.scale = max_abs > 0 ? max_abs / rail : 1.0;
    q.raw.reserve(t.size());
    for (double v : t) q.raw.push_back(quantize(v / q.scale, f).raw);
    return q;
}

QuantizedTensor quantize_tensor(std::span<const double> t, Precision p) {
    return quantize_tensor(t, mac_format(precision_bits(p)), kWeightRail);
}

namespace {

double reference_af(LayerKind k, double pre) {
    const double u = pre / kMaxNorm;
    const double lim = CordicConstants::hr_limit;
    switch (k) {
        case LayerKind::relu: return std::clamp(u, 0.0, kReluRail);
        case LayerKind::sigmoid: return 1.0 / (1.0 + std::exp(-std::clamp(u, -lim, lim)));
        case LayerKind::tanh: return std::tanh(std::clamp(u, -lim, lim));
        default: throw ContractError("not an elementwise AF");
    }
}

std::vector<double> reference_layer(const LayerSpec& l, std::span<const double> x) {
    std::vector<double> out;
    if (l.kind == LayerKind::dense) {
        const std::size_t in = x.size(), n = static_cast<std::size_t>(l.out_shape[0]);
        out.resize(n);
        for (std::size_t o = 0; o < n; ++o) {
            double acc = l.bias.empty() ? 0.0 : l.bias[o];
            for (std::size_t i = 0; i < in; ++i) acc += l.weight[o * in + i] * x[i];
            out[o] = acc;
        }
    } else if (l.kind == LayerKind::conv) {
        const ConvShape& s = l.conv;
        const int OH = s.out_h(), OW = s.out_w();
        out.assign(static_cast<std::size_t>(s.C_out) * OH * OW, 0.0);
        for (int co = 0; co < s.C_out; ++co)
            for (int oh = 0; oh < OH; ++oh)
                for (int ow = 0; ow < OW; ++ow) {
                    double acc = l.bias.empty() ? 0.0 : l.bias[static_cast<std::size_t>(co)];
                    for (int ci = 0; ci < s.C_in; ++ci)
                        for (int kh = 0; kh < s.K; ++kh)
                            for (int kw = 0; kw < s.K; ++kw) {
                                const int ih = oh * s.stride + kh - s.pad, iw = ow * s.stride + kw - s.pad;
                                if (ih < 0 || ih >= s.H || iw < 0 || iw >= s.W) continue;
                                acc += l.weight[((static_cast<std::size_t>(co) * s.C_in + ci) * s.K + kh) * s.K + kw] *
                                       x[(static_cast<std::size_t>(ci) * s.H + ih) * s.W + iw];
                            }
                    out[(static_cast<std::size_t>(co) * OH + oh) * OW + ow] = acc;
                }
    } else {
        out.resize(x.size());
        for (std::size_t i = 0; i < x.size(); ++i) out[i] = reference_af(l.kind, x[i]);
    }
    return out;
}

}  // namespace

Logits reference_forward(const ModelSpec& m, const Dataset& d) {
    validate(m);
    if (d.features() != volume(m.input_shape)) throw ShapeError("dataset input shape does not match the model");
    Logits out;
    for (std::size_t s = 0; s < d.samples(); ++s) {
        std::vector<double> cur(d.sample(s).begin(), d.sample(s).end());
        for (const auto& l : m.layers) {
            if (l.kind == LayerKind::softmax) break;  // order-preserving; logits are its input
            cur = reference_layer(l, cur);
        }
        out.classes = cur.size();
        out.values.insert(out.values.end(), cur.begin(), cur.end());
    }
    return out;
}

namespace {

// Scales for one MAC layer: z = W / s_w, X = a * alpha, Y = alpha / s_w * pre.
struct MacScales {
    QuantizedTensor w;
    double alpha = 1;
    std::vector<std::int64_t> bias_raw;

    double pre_per_y() const { return w.scale / alpha; }
};

MacScales mac_scales(const LayerSpec& l, QFormat mf, std::size_t outs) {
    MacScales s;
    s.w = quantize_tensor(l.weight, mf, kWeightRail);
    s.alpha = kPsumTarget * s.w.scale / l.psum_max;
    s.bias_raw.assign(outs, 0);
    if (!l.bias.empty())
        for (std::size_t o = 0; o < outs; ++o) s.bias_raw[o] = quantize(l.bias[o] * s.alpha / s.w.scale, mf).raw;
    return s;
}

}  // namespace

FixedRun fixed_forward(const ModelSpec& m, const Dataset& d, Precision p, const StagePlan& plan) {
    validate(m);
    validate(plan);
    if (d.features() != volume(m.input_shape)) throw ShapeError("dataset input shape does not match the model");
    if (p == Precision::H12 || p == Precision::H24)
        throw ConfigError("inference needs a uniform lane precision (FxP4/8/16/32), got " + to_string(p));
    const int bits = precision_bits(p);
    const QFormat mf = mac_format(bits), af = af_format(bits);
    for (const auto& l : m.layers)
        if (!has_weights(l.kind)) {
            PeConfig c = PeConfig::make(p, af_of(l.kind));
            c.stage_plan = plan;
            validate(c);
        }

    ArrayConfig arr = ArrayConfig::make(p);
    arr.pe_config.stage_plan = plan;
    const TileSchedule sched = TileSchedule::for_dataflow(arr.dataflow);

    const std::size_t S = d.samples();
    std::vector<double> cur = d.inputs;  // samples x features, real units
    std::size_t feat = d.features();
    FixedRun run;

    for (const auto& l : m.layers) {
        if (l.kind == LayerKind::dense) {
            const int in = l.in_shape[0], outs = l.out_shape[0];
            const MacScales sc = mac_scales(l, mf, static_cast<std::size_t>(outs));
            FxpMatrix A(static_cast<int>(S), in, mf), B(in, outs, mf), C0(static_cast<int>(S), outs, mf);
            for (std::size_t i = 0; i < S * static_cast<std::size_t>(in); ++i)
                A.raw[i] = quantize(cur[i] * sc.alpha, mf).raw;
            for (int o = 0; o < outs; ++o)
                for (int k = 0; k < in; ++k) B.at(k, o) = sc.w.raw[static_cast<std::size_t>(o) * in + k];
            for (int s = 0; s < static_cast<int>(S); ++s)
                for (int o = 0; o < outs; ++o) C0.at(s, o) = sc.bias_raw[static_cast<std::size_t>(o)];
            const GemmResult g = run_gemm(A, B, arr, sched, &C0);
            run.logits_raw = g.C.raw;
            feat = static_cast<std::size_t>(outs);
            cur.assign(S * feat, 0.0);
            for (std::size_t i = 0; i < cur.size(); ++i)
                cur[i] = static_cast<double>(g.C.raw[i]) * mf.lsb() * sc.pre_per_y();
        } else if (l.kind == LayerKind::conv) {
            const ConvShape& cs = l.conv;
            const MacScales sc = mac_scales(l, mf, static_cast<std::size_t>(cs.C_out));
            FxpTensor w{{cs.C_out, cs.C_in, cs.K, cs.K}, mf, sc.w.raw};
            const std::size_t out_feat = static_cast<std::size_t>(cs.ofmap_elems());
            std::vector<double> next(S * out_feat);
            run.logits_raw.assign(S * out_feat, 0);
            for (std::size_t s = 0; s < S; ++s) {
                FxpTensor x{{cs.C_in, cs.H, cs.W}, mf, std::vector<std::int64_t>(feat)};
                for (std::size_t i = 0; i < feat; ++i) x.raw[i] = quantize(cur[s * feat + i] * sc.alpha, mf).raw;
                const ConvResult r = run_conv2d(x, w, cs, arr, sched, &sc.bias_raw);
                for (std::size_t i = 0; i < out_feat; ++i) {
                    run.logits_raw[s * out_feat + i] = r.ofmap.raw[i];
                    next[s * out_feat + i] = static_cast<double>(r.ofmap.raw[i]) * mf.lsb() * sc.pre_per_y();
                }
            }
            cur = std::move(next);
            feat = out_feat;
        } else if (l.kind == LayerKind::softmax) {
            run.logits.values = cur;
            run.logits.classes = feat;
            run.softmax.reserve(cur.size());
            for (std::size_t s = 0; s < S; ++s) {
                std::vector<FxpValue> u(feat);
                for (std::size_t i = 0; i < feat; ++i) u[i] = quantize(cur[s * feat + i] / kMaxNorm, af);
                for (const auto& v : softmax_run(u, plan)) run.softmax.push_back(v.real());
            }
        } else {
            PeConfig c = PeConfig::make(p, af_of(l.kind));
            c.stage_plan = plan;
            std::vector<FxpValue> u(cur.size());
            for (std::size_t i = 0; i < cur.size(); ++i) u[i] = quantize(cur[i] / kMaxNorm, af);
            const auto y = apply_af_packed(u, c);
            for (std::size_t i = 0; i < cur.size(); ++i) cur[i] = y[i].real();
        }
    }
    if (m.layers.back().kind != LayerKind::softmax) {
        run.logits.values = cur;
        run.logits.classes = feat;
    }
    return run;
}

std::size_t argmax(std::span<const double> v) {
    return static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
}

double top1(const Logits& l, std::span<const int> labels) {
    if (labels.empty()) return 0;
    if (l.values.size() != labels.size() * l.classes) throw ShapeError("logit count does not match labels");
    std::size_t hits = 0;
    for (std::size_t s = 0; s < labels.size(); ++s) {
        const auto row = std::span<const double>(l.values).subspan(s * l.classes, l.classes);
        hits += static_cast<int>(argmax(row)) == labels[s];
    }
    return static_cast<double>(hits) / static_cast<double>(labels.size());
}

AccuracyReport run_inference(const ModelSpec& m, const Dataset& d, Precision p, std::optional<StagePlan> plan) {
    const StagePlan sp = plan ? *plan : default_stage_plan(precision_bits(p));
    const FixedRun fx = fixed_forward(m, d, p, sp);
    const Logits ref = reference_forward(m, d);

    AccuracyReport r;
    r.precision = p;
    r.hyp_stages = sp.hyperbolic_stages;
    r.lin_stages = sp.linear_stages;
    r.samples = d.samples();
    r.top1_fixed = top1(fx.logits, d.labels);
    r.top1_reference = top1(ref, d.labels);
    r.delta = 100.0 * (r.top1_fixed - r.top1_reference);
    if (!fx.softmax.empty()) r.top1_softmax = top1(Logits{fx.softmax, fx.logits.classes}, d.labels);
    else r.top1_softmax = r.top1_fixed;
    double err = 0;
    for (std::size_t i = 0; i < ref.values.size(); ++i) err += std::abs(fx.logits.values[i] - ref.values[i]);
    r.logit_mae = ref.values.empty() ? 0 : err / static_cast<double>(ref.values.size());
    return r;
}

}  // namespace flexpe
