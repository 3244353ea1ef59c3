#include "flexpe/systolic.hpp"

#include <algorithm>

namespace flexpe {

FxpMatrix FxpMatrix::quantized(int r, int c, QFormat f, const std::vector<double>& values) {
    if (values.size() != static_cast<std::size_t>(r) * c) throw ShapeError("matrix value count mismatch");
    FxpMatrix m(r, c, f);
    for (std::size_t i = 0; i < values.size(); ++i) m.raw[i] = quantize(values[i], f).raw;
    return m;
}

ArrayConfig ArrayConfig::make(Precision p, int rows, int cols, Dataflow d) {
    ArrayConfig a;
    a.rows = rows;
    a.cols = cols;
    a.pe_config = PeConfig::make(p, AfSel::relu, CtrlOp::mac);
    a.dataflow = d;
    return a;
}

void validate(const ArrayConfig& cfg) {
    if (cfg.rows < 1 || cfg.cols < 1) throw ConfigError("array rows and cols must be >= 1");
    validate(cfg.pe_config);
}

namespace {

struct Reg {
    std::int64_t v = 0;
    int m = -1;  // row of A (WS) / k index (OS) this value belongs to; -1 = bubble
};

int ceil_div(std::int64_t a, std::int64_t b) { return static_cast<int>((a + b - 1) / b); }

}  // namespace

std::int64_t gemm_cycles(int M, int K, int N, const ArrayConfig& cfg) {
    const PeConfig& pe = cfg.pe_config;
    const int lanes = lanes_per_issue(pe.precision) * (pe.folded ? 2 : 1);
    const int lin = pe.stage_plan.linear_stages;
    const bool piped = pe.exec_mode == ExecMode::pipelined;
    const int per_issue = piped ? 2 : lin;
    const int latency = piped ? lin + 2 : 0;
    const std::int64_t R = cfg.rows, C = cfg.cols;
    std::int64_t cycles = 0;
    if (cfg.dataflow == Dataflow::weight_stationary) {
        const std::int64_t tiles = std::int64_t{ceil_div(K, R)} * ceil_div(N, C);
        const std::int64_t per_tile = R + std::int64_t{per_issue} * ceil_div(M, lanes) + (R + C - 2) + latency;
        cycles = tiles * per_tile;
    } else {
        const std::int64_t tiles = std::int64_t{ceil_div(M, R * lanes)} * ceil_div(N, C);
        const std::int64_t per_tile = std::int64_t{per_issue} * K + (R + C - 2) + latency + C;
        cycles = tiles * per_tile;
    }
    return cycles;
}

FxpMatrix gemm_reference(const FxpMatrix& A, const FxpMatrix& B, int lin_stages, const FxpMatrix* C0) {
    if (A.cols != B.rows) throw ShapeError("inner dimensions differ");
    FxpMatrix C(A.rows, B.cols, A.format);
    for (int m = 0; m < A.rows; ++m)
        for (int n = 0; n < B.cols; ++n) {
            FxpValue acc{C0 ? C0->at(m, n) : 0, A.format};
            for (int k = 0; k < A.cols; ++k) acc = lr_mac(A.value(m, k), B.value(k, n), acc, lin_stages);
            C.at(m, n) = acc.raw;
        }
    return C;
}

GemmResult run_gemm(const FxpMatrix& A, const FxpMatrix& B, const ArrayConfig& cfg, const TileSchedule& sched,
                    const FxpMatrix* C0) {
    validate(cfg);
    if (A.cols != B.rows)
        throw ShapeError("GEMM inner dimensions differ: A is " + std::to_string(A.rows) + "x" +
                         std::to_string(A.cols) + ", B is " + std::to_string(B.rows) + "x" + std::to_string(B.cols));
    if (!(A.format == B.format)) throw ContractError("GEMM operands must share one format");
    if (C0 && (C0->rows != A.rows || C0->cols != B.cols || !(C0->format == A.format)))
        throw ShapeError("accumulator seed shape/format mismatch");
    const int M = A.rows, K = A.cols, N = B.cols;
    const int R = cfg.rows, Cc = cfg.cols;
    const int lin = cfg.pe_config.stage_plan.linear_stages;
    const QFormat f = A.format;

    GemmResult res;
    res.C = FxpMatrix(M, N, f);
    if (C0) res.C.raw = C0->raw;
    if (M > 0 && N > 0 && K > 0) {
        const ConvShape shape = gemm_as_conv(M, K, N);
        res.counters = analytic_traffic(shape, sched).counters;
    }
    res.cycles = gemm_cycles(M, K, N, cfg);

    auto mac = [&](std::int64_t a, std::int64_t z, std::int64_t acc) {
        return lr_mac(FxpValue{a, f}, FxpValue{z, f}, FxpValue{acc, f}, lin).raw;
    };
    std::vector<Reg> act(static_cast<std::size_t>(R) * Cc), psum(act.size()), next_act(act.size()),
        next_psum(act.size());
    auto idx = [Cc](int r, int c) { return static_cast<std::size_t>(r) * Cc + c; };

    if (cfg.dataflow == Dataflow::weight_stationary) {
        // Weights pinned per (k-tile, n-tile); rows of A stream in from the
        // left with a one-cycle skew per row; partial sums flow down.
        for (int n0 = 0; n0 < N; n0 += Cc) {
            for (int k0 = 0; k0 < K; k0 += R) {
                std::fill(act.begin(), act.end(), Reg{});
                std::fill(psum.begin(), psum.end(), Reg{});
                const int steps = M + R + Cc - 2;
                for (int t = 0; t < steps; ++t) {
                    for (int r = 0; r < R; ++r)
                        for (int c = 0; c < Cc; ++c) {
                            Reg a;
                            if (c == 0) {
                                const int m = t - r;
                                if (m >= 0 && m < M && k0 + r < K) a = Reg{A.at(m, k0 + r), m};
                                else if (m >= 0 && m < M) a = Reg{0, m};
                            } else {
                                a = act[idx(r, c - 1)];
                            }
                            Reg p;
                            if (r == 0) {
                                const int m = t - c;
                                if (m >= 0 && m < M && n0 + c < N) p = Reg{res.C.at(m, n0 + c), m};
                            } else {
                                p = psum[idx(r - 1, c)];
                            }
                            // Rows past K and columns past N are idle: pass through.
                            if (p.m >= 0 && a.m == p.m && k0 + r < K && n0 + c < N)
                                p.v = mac(a.v, B.at(k0 + r, n0 + c), p.v);
                            next_act[idx(r, c)] = a;
                            next_psum[idx(r, c)] = p;
                        }
                    std::swap(act, next_act);
                    std::swap(psum, next_psum);
                    for (int c = 0; c < Cc; ++c) {
                        const Reg& out = psum[idx(R - 1, c)];
                        if (out.m >= 0 && n0 + c < N) res.C.at(out.m, n0 + c) = out.v;
                    }
                }
            }
        }
    } else {
        // Output-stationary: each PE owns C[m0+r][n0+c]; A flows right,
        // B flows down, k arrives ascending.
        std::vector<Reg> wt(act.size()), next_wt(act.size());
        for (int m0 = 0; m0 < M; m0 += R)
            for (int n0 = 0; n0 < N; n0 += Cc) {
                std::fill(act.begin(), act.end(), Reg{});
                std::fill(wt.begin(), wt.end(), Reg{});
                std::vector<std::int64_t> acc(act.size(), 0);
                for (int r = 0; r < R; ++r)
                    for (int c = 0; c < Cc; ++c)
                        if (m0 + r < M && n0 + c < N) acc[idx(r, c)] = res.C.at(m0 + r, n0 + c);
                const int steps = K + R + Cc - 2;
                for (int t = 0; t < steps; ++t) {
                    for (int r = 0; r < R; ++r)
                        for (int c = 0; c < Cc; ++c) {
                            Reg a, b;
                            if (c == 0) {
                                const int k = t - r;
                                if (k >= 0 && k < K && m0 + r < M) a = Reg{A.at(m0 + r, k), k};
                            } else {
                                a = act[idx(r, c - 1)];
                            }
                            if (r == 0) {
                                const int k = t - c;
                                if (k >= 0 && k < K && n0 + c < N) b = Reg{B.at(k, n0 + c), k};
                            } else {
                                b = wt[idx(r - 1, c)];
                            }
                            if (a.m >= 0 && a.m == b.m && m0 + r < M && n0 + c < N)
                                acc[idx(r, c)] = mac(a.v, b.v, acc[idx(r, c)]);
                            next_act[idx(r, c)] = a;
                            next_wt[idx(r, c)] = b;
                        }
                    std::swap(act, next_act);
                    std::swap(wt, next_wt);
                }
                for (int r = 0; r < R; ++r)
                    for (int c = 0; c < Cc; ++c)
                        if (m0 + r < M && n0 + c < N) res.C.at(m0 + r, n0 + c) = acc[idx(r, c)];
            }
    }
    return res;
}

namespace {

void check_conv(const FxpTensor& ifmap, const FxpTensor& weights, const ConvShape& s) {
    s.validate();
    if (ifmap.shape != std::vector<int>{s.C_in, s.H, s.W})
        throw ShapeError("ifmap shape does not match conv shape");
    if (weights.shape != std::vector<int>{s.C_out, s.C_in, s.K, s.K})
        throw ShapeError("weight shape does not match conv shape");
    if (!(ifmap.format == weights.format)) throw ContractError("conv operands must share one format");
}

}  // namespace

ConvResult run_conv2d(const FxpTensor& ifmap, const FxpTensor& weights, const ConvShape& s, const ArrayConfig& cfg,
                      const TileSchedule& sched, const std::vector<std::int64_t>* bias, bool fuse_af) {
    check_conv(ifmap, weights, s);
    if (bias && bias->size() != static_cast<std::size_t>(s.C_out)) throw ShapeError("bias length != C_out");
    const int OH = s.out_h(), OW = s.out_w(), P = OH * OW, KK = s.C_in * s.K * s.K;
    const QFormat f = ifmap.format;

    FxpMatrix A(P, KK, f), B(KK, s.C_out, f), C0(P, s.C_out, f);
    for (int oh = 0; oh < OH; ++oh)
        for (int ow = 0; ow < OW; ++ow)
            for (int ci = 0; ci < s.C_in; ++ci)
                for (int kh = 0; kh < s.K; ++kh)
                    for (int kw = 0; kw < s.K; ++kw) {
                        const int ih = oh * s.stride + kh - s.pad, iw = ow * s.stride + kw - s.pad;
                        std::int64_t v = 0;
                        if (ih >= 0 && ih < s.H && iw >= 0 && iw < s.W)
                            v = ifmap.raw[(static_cast<std::size_t>(ci) * s.H + ih) * s.W + iw];
                        A.at(oh * OW + ow, (ci * s.K + kh) * s.K + kw) = v;
                    }
    for (int co = 0; co < s.C_out; ++co)
        for (int k = 0; k < KK; ++k) B.at(k, co) = weights.raw[static_cast<std::size_t>(co) * KK + k];
    if (bias)
        for (int p = 0; p < P; ++p)
            for (int co = 0; co < s.C_out; ++co) C0.at(p, co) = (*bias)[static_cast<std::size_t>(co)];

    GemmResult g = run_gemm(A, B, cfg, sched, bias ? &C0 : nullptr);
    ConvResult out;
    out.counters = analytic_traffic(s, sched).counters;
    out.cycles = g.cycles;
    out.ofmap.shape = {s.C_out, OH, OW};
    out.ofmap.format = f;
    out.ofmap.raw.resize(static_cast<std::size_t>(s.C_out) * P);
    for (int co = 0; co < s.C_out; ++co)
        for (int p = 0; p < P; ++p) out.ofmap.raw[static_cast<std::size_t>(co) * P + p] = g.C.at(p, co);

    if (fuse_af) {
        const QFormat af = af_format(f.total_bits);
        std::vector<FxpValue> v;
        v.reserve(out.ofmap.raw.size());
        for (auto r : out.ofmap.raw) v.push_back(convert(FxpValue{r, f}, af));
        v = apply_af_packed(v, cfg.pe_config);
        out.ofmap.format = af;
        for (std::size_t i = 0; i < v.size(); ++i) out.ofmap.raw[i] = v[i].raw;
    }
    return out;
}

FxpTensor conv_reference(const FxpTensor& ifmap, const FxpTensor& weights, const ConvShape& s, int lin_stages,
                         const std::vector<std::int64_t>* bias) {
    check_conv(ifmap, weights, s);
    const int OH = s.out_h(), OW = s.out_w();
    const QFormat f = ifmap.format;
    FxpTensor out{{s.C_out, OH, OW}, f, std::vector<std::int64_t>(static_cast<std::size_t>(s.C_out) * OH * OW)};
    for (int co = 0; co < s.C_out; ++co)
        for (int oh = 0; oh < OH; ++oh)
            for (int ow = 0; ow < OW; ++ow) {
                FxpValue acc{bias ? (*bias)[static_cast<std::size_t>(co)] : 0, f};
                for (int ci = 0; ci < s.C_in; ++ci)
                    for (int kh = 0; kh < s.K; ++kh)
                        for (int kw = 0; kw < s.K; ++kw) {
                            const int ih = oh * s.stride + kh - s.pad, iw = ow * s.stride + kw - s.pad;
                            std::int64_t x = 0;
                            if (ih >= 0 && ih < s.H && iw >= 0 && iw < s.W)
                                x = ifmap.raw[(static_cast<std::size_t>(ci) * s.H + ih) * s.W + iw];
                            const std::int64_t w =
                                weights.raw[((static_cast<std::size_t>(co) * s.C_in + ci) * s.K + kh) * s.K + kw];
                            acc = lr_mac(FxpValue{x, f}, FxpValue{w, f}, acc, lin_stages);
                        }
                out.raw[(static_cast<std::size_t>(co) * OH + oh) * OW + ow] = acc.raw;
            }
    return out;
}

std::vector<FxpValue> apply_af_packed(const std::vector<FxpValue>& v, const PeConfig& cfg) {
    if (cfg.sel_af == AfSel::softmax)
        throw ConfigError("softmax normalizes a whole vector; use softmax_run instead of lane packing");
    PeConfig c = cfg;
    c.ctrl_op = CtrlOp::af;
    const LaneConfig lanes = lanes_for(c.precision);
    std::vector<FxpValue> out;
    out.reserve(v.size());
    for (std::size_t i = 0; i < v.size(); i += lanes.size()) {
        std::vector<FxpValue> chunk;
        for (std::size_t l = 0; l < lanes.size(); ++l) {
            const QFormat lf = af_format(lanes.width(l));
            if (i + l < v.size()) {
                if (!(v[i + l].format == lf)) throw ContractError("apply_af_packed: value not in lane AF format");
                chunk.push_back(v[i + l]);
            } else {
                chunk.push_back(FxpValue{0, lf});
            }
        }
        const auto res = unpack_lanes(pe_execute(pack_lanes(chunk, lanes), c));
        for (std::size_t l = 0; l < lanes.size() && i + l < v.size(); ++l) out.push_back(res[l]);
    }
    return out;
}

ThroughputReport throughput_report(const ArrayConfig& cfg, double clock_hz, std::int64_t workload_macs) {
    validate(cfg);
    const PeConfig& pe = cfg.pe_config;
    ThroughputReport t;
    t.lanes = lanes_per_issue(pe.precision);
    t.issue_rate = pe.exec_mode == ExecMode::pipelined ? 0.5 * (pe.folded ? 2 : 1)
                                                       : 1.0 / pe.stage_plan.linear_stages;
    t.ops_per_cycle = 2.0 * cfg.rows * cfg.cols * t.lanes * t.issue_rate;
    t.clock_hz = clock_hz;
    t.gops = t.ops_per_cycle * clock_hz / 1e9;
    t.workload_ops = 2 * workload_macs;
    if (t.ops_per_cycle > 0 && clock_hz > 0)
        t.workload_seconds = static_cast<double>(t.workload_ops) / (t.ops_per_cycle * clock_hz);
    return t;
}

}  // namespace flexpe
