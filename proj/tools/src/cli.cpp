#include "flexpe_cli/cli.hpp"

#include <CLI11.hpp>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "flexpe/container.hpp"
#include "flexpe/error_harness.hpp"
#include "flexpe/flex_pe.hpp"
#include "flexpe/nn.hpp"
#include "flexpe/numfmt.hpp"
#include "flexpe/systolic.hpp"

#ifndef FLEXPE_DATA_DIR
#define FLEXPE_DATA_DIR "data"
#endif
#ifndef FLEXPE_VERSION
#define FLEXPE_VERSION "0"
#endif

namespace flexpe::cli {

namespace fs = std::filesystem;

namespace {

constexpr GoldenRow kHyp[] = {
    {1, 0.5493, 1.2075, 0.6037, -0.0493, 1},  {2, 0.2554, 1.0566, 0.3019, 0.2061, -1},
    {3, 0.1257, 1.0943, 0.4339, 0.0804, 1},   {4, 0.0626, 1.1214, 0.5023, 0.0179, 1},
    {5, 0.0313, 1.1371, 0.5374, -0.0134, 1},  {6, 0.0156, 1.1287, 0.5196, 0.0022, -1},
    {7, 0.0068, 1.1328, 0.5284, -0.0046, 1},  {8, 0.0039, 1.1307, 0.5240, -0.0007, -1},
    {9, 0.0020, 1.1297, 0.5218, 0.0013, -1},
};

constexpr GoldenRow kDiv[] = {
    {1, 0.5, 2.51, -0.734, 0.5, -1},
    {2, 0.25, 2.51, -0.1065, 0.25, 1},
    {3, 0.125, 2.51, 0.20725, 0.125, 1},
    {4, 0.0625, 2.51, 0.050375, 0.1875, -1},
    {5, 0.03125, 2.51, -0.02806, 0.21875, -1},
    {6, 0.015625, 2.51, 0.011156, 0.203125, 1},
    {7, 0.007812, 2.51, -0.00845, 0.210937, -1},
    {8, 0.003906, 2.51, 0.001351, 0.207031, 1},
    {9, 0.001953, 2.51, -0.00355, 0.208984, -1},
};

constexpr double kDivNumerator = 0.521;
constexpr double kDivDenominator = 2.51;
constexpr double kHypInput = 0.5;

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError("cannot open '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::string file_sha256(const std::string& path) {
    const std::string s = read_file(path);
    return "sha256:" + sha256_hex(std::span(reinterpret_cast<const std::uint8_t*>(s.data()), s.size()));
}

void check_digest(const Json& p, const std::string& key, const std::string& path) {
    const std::string now = file_sha256(path);
    const std::string want = p.at(key + "_sha256").get<std::string>();
    if (now != want)
        throw ParseError("'" + path + "' changed since the manifest was written (" + want + " -> " + now + ")");
}

std::string csv_with_manifest(const Json& manifest, const std::string& body) {
    return "# manifest: " + manifest.dump() + "\n" + body;
}

std::string json_with_manifest(const Json& manifest, Json body) {
    Json out;
    out["manifest"] = manifest;
    for (auto& [k, v] : body.items()) out[k] = v;
    return out.dump(2) + "\n";
}

Json counters_json(const DmaCounter& c) {
    return Json{{"ifmap_reads", c.ifmap_reads},
                {"weight_reads", c.weight_reads},
                {"psum_writes", c.psum_writes},
                {"psum_reads", c.psum_reads}};
}

Json shape_json(const ConvShape& s) {
    return Json{{"H", s.H},     {"W", s.W},           {"C_in", s.C_in}, {"C_out", s.C_out},
                {"K", s.K},     {"stride", s.stride}, {"pad", s.pad},   {"macs", s.macs()}};
}

StagePlan plan_from(const Json& p) {
    StagePlan sp = default_stage_plan(p.at("precision").get<int>());
    sp.hyperbolic_stages = p.at("hyp").get<int>();
    sp.linear_stages = p.at("lin").get<int>();
    sp.schedule = parse_schedule(p.at("schedule").get<std::string>());
    validate(sp);
    return sp;
}

// ---- af --------------------------------------------------------------------

double af_reference(AfSel fn, double x) {
    const double L = CordicConstants::hr_limit;
    const double u = std::clamp(x, -L, L);
    switch (fn) {
        case AfSel::sigmoid: return 1.0 / (1.0 + std::exp(-u));
        case AfSel::tanh: return std::tanh(u);
        case AfSel::exp: return std::exp(u);
        case AfSel::relu: return std::max(0.0, x);
        case AfSel::softmax: {
            // first entry of softmax(x, 0, 0, 0) in the clamped max-subtracted form
            const double m = std::max(x, 0.0);
            const double e0 = std::exp(std::max(x - m, -L)), e1 = std::exp(std::max(-m, -L));
            return e0 / (e0 + 3 * e1);
        }
    }
    return 0;
}

std::string render_af(const Json& p) {
    const AfSel fn = parse_af(p.at("fn").get<std::string>());
    const int bits = p.at("precision").get<int>();
    PeConfig cfg = PeConfig::make(precision_from_bits(bits), fn);
    cfg.stage_plan = plan_from(p);
    validate(cfg);
    const QFormat f = af_format(bits);
    const double from = p.at("from").get<double>(), to = p.at("to").get<double>();
    const int points = p.at("points").get<int>();
    if (points < 1) throw ConfigError("--points must be >= 1");
    if (!(to > from)) throw ConfigError("--to must be greater than --from");

    std::string out = "x,x_raw,y,y_raw,reference,abs_err\n";
    const double step = (to - from) / points;
    for (int i = 0; i < points; ++i) {
        const FxpValue x = quantize(from + i * step, f);
        FxpValue y;
        switch (fn) {
            case AfSel::sigmoid: y = af_sigmoid(x, cfg.stage_plan); break;
            case AfSel::tanh: y = af_tanh(x, cfg.stage_plan); break;
            case AfSel::exp: y = af_exp(x, cfg.stage_plan); break;
            case AfSel::relu: y = af_relu(x); break;
            case AfSel::softmax: {
                const FxpValue zero{0, f};
                const std::vector<FxpValue> v{x, zero, zero, zero};
                y = softmax_run(v, cfg.stage_plan).front();
                break;
            }
        }
        const double ref = af_reference(fn, x.real());
        out += fmt_num(x.real()) + "," + std::to_string(x.raw) + "," + fmt_num(y.real()) + "," +
               std::to_string(y.raw) + "," + fmt_num(ref) + "," + fmt_num(std::abs(y.real() - ref)) + "\n";
    }
    return out;
}

// ---- trace -----------------------------------------------------------------

std::string render_trace(const Json& p, bool* pass) {
    const TraceCheck t = trace_check(p.at("table").get<std::string>(), p.at("precision").get<int>());
    std::string out = "run,i,E,X,Y,Z,d,ref_X,ref_Y,ref_Z,ref_d,dX_lsb,dY_lsb,dZ_lsb,z_gated\n";
    for (const auto& r : t.rows)
        out += r.run + "," + std::to_string(r.i) + "," + fmt_num(r.E) + "," + fmt_num(r.X) + "," + fmt_num(r.Y) +
               "," + fmt_num(r.Z) + "," + std::to_string(r.d) + "," + fmt_num(r.ref.X) + "," + fmt_num(r.ref.Y) +
               "," + fmt_num(r.ref.Z) + "," + std::to_string(r.ref.d) + "," + fmt_fixed(r.dx, 3) + "," +
               fmt_fixed(r.dy, 3) + "," + fmt_fixed(r.dz, 3) + "," + (r.z_gated ? "1" : "0") + "\n";
    if (pass) *pass = t.pass();
    return out;
}

// ---- sweep -----------------------------------------------------------------

std::string render_sweep(const Json& p, std::uint64_t seed) {
    const McFunction fn = parse_function(p.at("fn").get<std::string>());
    const int bits = p.at("precision").get<int>();
    const StageRange range = parse_stage_range(p.at("stages").get<std::string>());
    const SweepAxis axis = parse_axis(p.at("axis").get<std::string>());
    const HypSchedule sched = parse_schedule(p.at("schedule").get<std::string>());
    const auto rows = pareto_sweep(fn, bits, range, seed, axis, sched);
    return reports_csv(rows);
}

// ---- gemm ------------------------------------------------------------------

std::string render_gemm(const Json& manifest) {
    const Json& p = manifest.at("params");
    const int M = p.at("M").get<int>(), K = p.at("K").get<int>(), N = p.at("N").get<int>();
    if (M < 1 || K < 1 || N < 1) throw ShapeError("GEMM dimensions must be >= 1");
    const int bits = p.at("precision").get<int>();
    ArrayConfig cfg = ArrayConfig::make(precision_from_bits(bits), p.at("rows").get<int>(), p.at("cols").get<int>(),
                                        parse_dataflow(p.at("dataflow").get<std::string>()));
    cfg.pe_config.stage_plan.linear_stages = p.at("lin").get<int>();
    validate(cfg);
    const TileSchedule sched = TileSchedule::for_dataflow(cfg.dataflow, buffer_preset(p.at("buffers").get<std::string>()));
    const QFormat f = mac_format(bits);

    Uniform u(manifest.at("seed").get<std::uint64_t>());
    std::vector<double> a(static_cast<std::size_t>(M) * K), b(static_cast<std::size_t>(K) * N);
    for (auto& v : a) v = u.range(-1.0, 1.0);
    for (auto& v : b) v = u.range(-kWeightRail, kWeightRail);
    const FxpMatrix A = FxpMatrix::quantized(M, K, f, a), B = FxpMatrix::quantized(K, N, f, b);
    const GemmResult g = run_gemm(A, B, cfg, sched);
    const FxpMatrix ref = gemm_reference(A, B, cfg.pe_config.stage_plan.linear_stages);

    std::vector<std::uint8_t> bytes;
    for (auto r : g.C.raw)
        for (int i = 0; i < 8; ++i) bytes.push_back(static_cast<std::uint8_t>(static_cast<std::uint64_t>(r) >> (8 * i)));
    Json body;
    body["format"] = f.str();
    body["cycles"] = g.cycles;
    body["counters"] = counters_json(g.counters);
    body["bit_identical_to_reference"] = g.C == ref;
    body["result_sha256"] = "sha256:" + sha256_hex(bytes);
    return json_with_manifest(manifest, body);
}

// ---- dma -------------------------------------------------------------------

std::string render_dma(const Json& manifest) {
    const Json& p = manifest.at("params");
    const std::string path = resolve_workload(p.at("workload").get<std::string>());
    check_digest(p, "workload", path);
    Workload w = read_workload(path);
    const std::string buffers_name = p.at("buffers").get<std::string>();
    const Buffers buffers = buffer_preset(buffers_name);
    const Dataflow df = parse_dataflow(p.at("dataflow").get<std::string>());
    const TileSchedule sched = TileSchedule::for_dataflow(df, buffers);

    Json layers = Json::array();
    DmaCounter naive_total, sched_total;
    for (const auto& l : w.layers) {
        const DmaReport r = dma_report(l.shape, sched);
        naive_total += r.naive;
        sched_total += r.scheduled;
        Json j;
        j["name"] = l.name;
        j["shape"] = shape_json(l.shape);
        j["naive"] = counters_json(r.naive);
        j["scheduled"] = counters_json(r.scheduled);
        if (r.measured) {
            j["measured"] = counters_json(*r.measured);
            j["measured_equals_analytic"] = *r.measured == r.scheduled;
        }
        j["residency_level"] = Json{{"ifmap", r.residency[0]}, {"weight", r.residency[1]}, {"psum", r.residency[2]}};
        j["ifmap_factor"] = r.ifmap_factor;
        j["weight_factor"] = r.weight_factor;
        layers.push_back(j);
    }
    auto ratio = [](std::uint64_t a, std::uint64_t b) { return b ? double(a) / double(b) : 1.0; };
    Json body;
    body["workload"] = w.name;
    body["dataflow"] = to_string(df);
    body["buffers"] = Json{{"preset", buffers_name},
                           {"ifmap", buffers.ifmap},
                           {"weight", buffers.weight},
                           {"psum", buffers.psum}};
    body["layers"] = layers;
    body["total"] = Json{{"naive", counters_json(naive_total)},
                         {"scheduled", counters_json(sched_total)},
                         {"ifmap_factor", ratio(naive_total.ifmap_reads, sched_total.ifmap_reads)},
                         {"weight_factor", ratio(naive_total.weight_reads, sched_total.weight_reads)}};
    return json_with_manifest(manifest, body);
}

// ---- infer -----------------------------------------------------------------

std::string render_infer(const Json& manifest) {
    const Json& p = manifest.at("params");
    const std::string mpath = resolve_model(p.at("model").get<std::string>());
    const std::string dpath = resolve_dataset(p.at("dataset").get<std::string>());
    check_digest(p, "model", mpath);
    check_digest(p, "dataset", dpath);
    const ModelSpec m = load_model(mpath);
    const Dataset d = load_dataset(dpath);
    const Precision prec = precision_from_bits(p.at("precision").get<int>());
    const AccuracyReport r = run_inference(m, d, prec, plan_from(p));

    Json body;
    body["model"] = m.name;
    body["model_blob_digest"] = m.digest;
    body["dataset"] = d.name;
    body["dataset_blob_digest"] = d.digest;
    body["report"] = Json{{"precision", to_string(r.precision)},
                          {"hyp_stages", r.hyp_stages},
                          {"lin_stages", r.lin_stages},
                          {"samples", r.samples},
                          {"top1_fixed", r.top1_fixed},
                          {"top1_reference", r.top1_reference},
                          {"delta", r.delta},
                          {"top1_softmax", r.top1_softmax},
                          {"logit_mae", r.logit_mae},
                          {"calibration", r.calibration}};
    return json_with_manifest(manifest, body);
}

// ---- angles / throughput ------------------------------------------------------

std::string render_angles(const Json& p) {
    const int bits = p.at("precision").get<int>();
    const int steps = p.at("steps").get<int>();
    if (steps < 1 || steps > 64) throw ConfigError("--steps must lie in [1, 64]");
    const std::string kind = p.at("kind").get<std::string>();
    const QFormat f = af_format(bits);
    if (kind == "hyp") return angle_table_csv(hyperbolic_table(f, steps, parse_schedule(p.at("schedule").get<std::string>())));
    if (kind == "lin") return angle_table_csv(linear_table(f, steps, 1));
    if (kind == "mac") return angle_table_csv(linear_table(mac_format(bits), steps, -2));
    throw ParseError("unknown angle table '" + kind + "' (expected hyp, lin or mac)");
}

std::string render_throughput(const Json& manifest) {
    const Json& p = manifest.at("params");
    ArrayConfig cfg = ArrayConfig::make(precision_from_bits(p.at("precision").get<int>()), p.at("rows").get<int>(),
                                        p.at("cols").get<int>());
    const std::string mode = p.at("mode").get<std::string>();
    if (mode != "pipelined" && mode != "iterative") throw ParseError("--mode must be pipelined or iterative");
    cfg.pe_config.exec_mode = mode == "pipelined" ? ExecMode::pipelined : ExecMode::iterative;
    cfg.pe_config.folded = p.at("folded").get<bool>();
    validate(cfg);
    const ThroughputReport t = throughput_report(cfg, p.at("clock_hz").get<double>(), p.at("macs").get<std::int64_t>());
    const PipelineTiming pt = pipeline_timing(cfg.pe_config, p.at("inputs").get<std::int64_t>());
    Json body;
    body["ops_per_cycle"] = t.ops_per_cycle;
    body["issue_rate"] = t.issue_rate;
    body["lanes"] = t.lanes;
    body["gops"] = t.gops;
    body["workload_ops"] = t.workload_ops;
    body["workload_seconds"] = t.workload_seconds;
    body["pe_timing"] = Json{{"inputs", p.at("inputs")},
                             {"cycles", pt.cycles_elapsed},
                             {"fill_depth", pt.fill_depth},
                             {"results_per_issue", pt.results_per_issue},
                             {"issues", pt.issues},
                             {"results_ready", pt.results_ready}};
    return json_with_manifest(manifest, body);
}

std::string render_impl(const Json& manifest, bool* gate) {
    const std::string sub = manifest.at("subcommand").get<std::string>();
    const Json& p = manifest.at("params");
    if (gate) *gate = true;
    if (sub == "af") return csv_with_manifest(manifest, render_af(p));
    if (sub == "trace") return csv_with_manifest(manifest, render_trace(p, gate));
    if (sub == "sweep") return csv_with_manifest(manifest, render_sweep(p, manifest.at("seed").get<std::uint64_t>()));
    if (sub == "angles") return csv_with_manifest(manifest, render_angles(p));
    if (sub == "gemm") return render_gemm(manifest);
    if (sub == "dma") return render_dma(manifest);
    if (sub == "infer") return render_infer(manifest);
    if (sub == "throughput") return render_throughput(manifest);
    throw ParseError("manifest names unknown subcommand '" + sub + "'");
}

std::string default_output(const std::string& sub, const std::string& ext) {
    if (const char* dir = std::getenv("FLEXPE_OUT_DIR"); dir && *dir)
        return (fs::path(dir) / (sub + "." + ext)).string();
    return "-";
}

void emit(const std::string& text, const std::string& output, std::ostream& out, std::ostream& err) {
    if (output == "-") {
        out << text;
        return;
    }
    const fs::path path(output);
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream f(path, std::ios::binary);
    if (!f) throw ParseError("cannot write '" + output + "'");
    f << text;
    err << "wrote " << output << "\n";
}

}  // namespace

std::span<const GoldenRow> golden_hyperbolic() { return kHyp; }
std::span<const GoldenRow> golden_division() { return kDiv; }

TraceCheck trace_check(const std::string& table, int precision) {
    if (precision < 16 || !is_lane_width(precision) || precision == 24)
        throw ConfigError("trace runs at FxP16 or FxP32 (got " + std::to_string(precision) + ")");
    const QFormat f = af_format(precision);
    TraceCheck out;
    auto add_run = [&](const std::string& name, const std::vector<CordicState>& states, const AngleTable& tab,
                       std::span<const GoldenRow> gold, bool z_gated) {
        for (std::size_t k = 1; k < states.size(); ++k) {
            const CordicState& s = states[k];
            const GoldenRow& g = gold[k - 1];
            TraceRow r;
            r.run = name;
            r.i = g.i;
            r.E = tab.entries[k - 1].real();
            r.X = s.x.real();
            r.Y = s.y.real();
            r.Z = s.z.real();
            r.d = s.last_d;
            r.ref = g;
            r.dx = (r.X - g.X) / kTraceLsb;
            r.dy = (r.Y - g.Y) / kTraceLsb;
            r.dz = (r.Z - g.Z) / kTraceLsb;
            r.z_gated = z_gated;
            out.max_delta = std::max({out.max_delta, std::abs(r.dx), std::abs(r.dy), z_gated ? std::abs(r.dz) : 0.0});
            out.directions_match = out.directions_match && r.d == g.d;
            out.rows.push_back(r);
        }
    };
    if (table == "hyp") {
        std::vector<double> printed;
        for (const auto& g : kHyp) printed.push_back(g.E);
        const CordicState init{quantize(CordicConstants::inv_Kh_exact, f), FxpValue{0, f}, quantize(kHypInput, f)};
        const AngleTable truth = hyperbolic_table(f, 9, HypSchedule::plain);
        const AngleTable replay = with_entries(truth, printed);
        add_run("printed-E", run_trace(init, kHyperbolicRotation, replay, 9), replay, kHyp, true);
        add_run("true-E", run_trace(init, kHyperbolicRotation, truth, 9), truth, kHyp, false);
    } else if (table == "div") {
        const CordicState init{quantize(kDivDenominator, f), quantize(kDivNumerator, f), FxpValue{0, f}};
        const AngleTable tab = linear_table(f, 9, 1);
        add_run("true-E", run_trace(init, kLinearVectoring, tab, 9), tab, kDiv, true);
    } else {
        throw ParseError("unknown trace table '" + table + "' (expected hyp or div)");
    }
    return out;
}

Json make_manifest(const std::string& subcommand, Json params, std::uint64_t seed, const std::string& output) {
    Json m;
    m["subcommand"] = subcommand;
    m["params"] = std::move(params);
    m["seed"] = seed;
    m["tool_version"] = FLEXPE_VERSION;
    m["outputs"] = Json::array({output});
    return m;
}

std::string render(const Json& manifest) { return render_impl(manifest, nullptr); }

Json extract_manifest(const std::string& report) {
    const std::string tag = "# manifest: ";
    if (report.rfind(tag, 0) == 0) {
        const auto nl = report.find('\n');
        return Json::parse(report.substr(tag.size(), nl == std::string::npos ? std::string::npos : nl - tag.size()));
    }
    try {
        const Json j = Json::parse(report);
        if (j.contains("manifest")) return j.at("manifest");
    } catch (const Json::parse_error&) {
    }
    throw ParseError("report carries no manifest");
}

std::string resolve_model(const std::string& name) {
    if (name == "fixture") return std::string(FLEXPE_DATA_DIR) + "/fixtures/digits_mlp.fpm";
    if (name == "fixture-conv") return std::string(FLEXPE_DATA_DIR) + "/fixtures/digits_conv.fpm";
    return name;
}

std::string resolve_dataset(const std::string& name) {
    if (name == "fixture") return std::string(FLEXPE_DATA_DIR) + "/fixtures/digits_test.fpd";
    return name;
}

std::string resolve_workload(const std::string& name) {
    if (fs::exists(name)) return name;
    const fs::path shipped = fs::path(FLEXPE_DATA_DIR) / "workloads" / name;
    if (fs::exists(shipped)) return shipped.string();
    throw ParseError("workload '" + name + "' not found (also looked in " + shipped.parent_path().string() + ")");
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Bit-accurate Flex-PE emulator"};
    app.require_subcommand(1);
    app.set_version_flag("--version", std::string(FLEXPE_VERSION));

    std::string output;
    std::uint64_t seed = 1;
    Json params;

    // af
    std::string af_fn = "sigmoid", schedule = "repeated";
    int precision = 16, hyp = 0, lin = 0, points = 256;
    double from = -CordicConstants::hr_limit, to = CordicConstants::hr_limit;
    auto* af = app.add_subcommand("af", "Dump an activation-function curve as CSV");
    af->add_option("--fn", af_fn, "sigmoid | tanh | exp | relu | softmax")->capture_default_str();
    af->add_option("--precision", precision, "lane width: 4, 8, 16, 32")->capture_default_str();
    std::string af_stages;
    af->add_option("--stages", af_stages, "H,L or N for both (default: precision plan)");
    af->add_option("--hyp", hyp, "hyperbolic stages (default: precision plan)");
    af->add_option("--lin", lin, "linear stages (default: precision plan)");
    af->add_option("--schedule", schedule, "plain | repeated")->capture_default_str();
    af->add_option("--from", from, "first sample")->capture_default_str();
    af->add_option("--to", to, "end of the half-open sample range")->capture_default_str();
    af->add_option("--points", points, "number of samples")->capture_default_str();
    af->add_option("--out", output, "output file (default: $FLEXPE_OUT_DIR or stdout)");

    // trace
    std::string table = "hyp";
    int trace_precision = 16;
    auto* trace = app.add_subcommand("trace", "Replay the 9-stage golden CORDIC traces and gate on 2 LSB");
    trace->add_option("--table", table, "hyp | div")->capture_default_str();
    trace->add_option("--precision", trace_precision, "16 or 32")->capture_default_str();
    trace->add_option("--out", output, "output file");

    // sweep
    std::string sweep_fn = "sigmoid", stages = "1:8", axis;
    auto* sweep = app.add_subcommand("sweep", "Monte-Carlo error sweep over stage counts");
    sweep->add_option("--fn", sweep_fn, "sigmoid | tanh | exp | divide | mac | softmax")->capture_default_str();
    sweep->add_option("--precision", precision, "4, 8, 16, 32")->capture_default_str();
    sweep->add_option("--stages", stages, "inclusive range A:B")->capture_default_str();
    sweep->add_option("--axis", axis, "hyp | lin | both (default depends on --fn)");
    sweep->add_option("--schedule", schedule, "plain | repeated")->capture_default_str();
    sweep->add_option("--seed", seed)->capture_default_str();
    sweep->add_option("--out", output, "output file");

    // gemm
    int M = 16, K = 16, N = 16, rows = 8, cols = 8;
    std::string dataflow = "ws", buffers = "medium";
    auto* gemm = app.add_subcommand("gemm", "Random fixed-point GEMM through the systolic array");
    gemm->add_option("-M", M)->capture_default_str();
    gemm->add_option("-K", K)->capture_default_str();
    gemm->add_option("-N", N)->capture_default_str();
    gemm->add_option("--precision", precision)->capture_default_str();
    gemm->add_option("--lin", lin, "linear stages (default: precision plan)");
    gemm->add_option("--rows", rows)->capture_default_str();
    gemm->add_option("--cols", cols)->capture_default_str();
    gemm->add_option("--dataflow", dataflow, "ws | os")->capture_default_str();
    gemm->add_option("--buffers", buffers, "small | medium | large | I,W,P")->capture_default_str();
    gemm->add_option("--seed", seed)->capture_default_str();
    gemm->add_option("--out", output, "output file");

    // dma
    std::string workload;
    std::string dma_buffers, dma_dataflow;
    auto* dma = app.add_subcommand("dma", "DMA traffic report for a workload file");
    dma->add_option("--workload", workload, "workload file or shipped name (vgg16.txt, micro.txt)")->required();
    dma->add_option("--buffers", dma_buffers, "override: small | medium | large | I,W,P");
    dma->add_option("--dataflow", dma_dataflow, "override: ws | os");
    dma->add_option("--out", output, "output file");

    // infer
    std::string model = "fixture", dataset = "fixture";
    auto* infer = app.add_subcommand("infer", "Fixed-point vs reference inference accuracy");
    infer->add_option("--model", model, "fixture | fixture-conv | path")->capture_default_str();
    infer->add_option("--dataset", dataset, "fixture | path")->capture_default_str();
    infer->add_option("--precision", precision, "4, 8, 16, 32")->capture_default_str();
    infer->add_option("--hyp", hyp);
    infer->add_option("--lin", lin);
    infer->add_option("--out", output, "output file");

    // angles
    std::string kind = "hyp";
    int steps = 16;
    auto* angles = app.add_subcommand("angles", "Quantized CORDIC angle table");
    angles->add_option("--kind", kind, "hyp | lin | mac")->capture_default_str();
    angles->add_option("--precision", precision)->capture_default_str();
    angles->add_option("--steps", steps)->capture_default_str();
    angles->add_option("--schedule", schedule)->capture_default_str();
    angles->add_option("--out", output, "output file");

    // throughput
    std::string mode = "pipelined";
    bool folded = false;
    double clock_hz = 1e9;
    std::int64_t macs = 0, inputs = 100;
    auto* thr = app.add_subcommand("throughput", "Lane/issue throughput model");
    thr->add_option("--precision", precision)->capture_default_str();
    thr->add_option("--rows", rows)->capture_default_str();
    thr->add_option("--cols", cols)->capture_default_str();
    thr->add_option("--mode", mode, "pipelined | iterative")->capture_default_str();
    thr->add_flag("--folded", folded, "FxP8/16 on FxP32 hardware with stage folding");
    thr->add_option("--clock", clock_hz, "Hz")->capture_default_str();
    thr->add_option("--macs", macs, "workload MAC count")->capture_default_str();
    thr->add_option("--inputs", inputs, "inputs for the PE timing block")->capture_default_str();
    thr->add_option("--out", output, "output file");

    // replay
    std::string report;
    auto* replay = app.add_subcommand("replay", "Regenerate a report from its manifest and byte-compare");
    replay->add_option("report", report, "CSV or JSON report")->required();

    std::vector<std::string> argv_store{"flexpe"};
    argv_store.insert(argv_store.end(), args.begin(), args.end());
    std::vector<const char*> argv;
    for (const auto& a : argv_store) argv.push_back(a.c_str());

    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kOk : kUsage;
    }

    try {
        auto plan_stages = [&](int bits) {
            const StagePlan d = default_stage_plan(bits);
            return std::pair{hyp > 0 ? hyp : d.hyperbolic_stages, lin > 0 ? lin : d.linear_stages};
        };
        std::string sub, ext = "csv";
        std::uint64_t used_seed = 0;
        if (*af) {
            sub = "af";
            if (!af_stages.empty()) {
                const auto comma = af_stages.find(',');
                try {
                    hyp = std::stoi(af_stages.substr(0, comma));
                    lin = comma == std::string::npos ? hyp : std::stoi(af_stages.substr(comma + 1));
                } catch (const std::logic_error&) {
                    throw ParseError("--stages expects N or H,L (got '" + af_stages + "')");
                }
            }
            const auto [h, l] = plan_stages(precision);
            params = Json{{"fn", af_fn}, {"precision", precision}, {"hyp", h},       {"lin", l},
                          {"schedule", schedule}, {"from", from}, {"to", to}, {"points", points}};
        } else if (*trace) {
            sub = "trace";
            params = Json{{"table", table}, {"precision", trace_precision}};
        } else if (*sweep) {
            sub = "sweep";
            const McFunction fn = parse_function(sweep_fn);
            params = Json{{"fn", sweep_fn},
                          {"precision", precision},
                          {"stages", stages},
                          {"axis", axis.empty() ? to_string(default_axis(fn)) : axis},
                          {"schedule", schedule}};
            used_seed = seed;
        } else if (*gemm) {
            sub = "gemm";
            ext = "json";
            params = Json{{"M", M},       {"K", K},       {"N", N},
                          {"precision", precision},
                          {"lin", plan_stages(precision).second},
                          {"rows", rows}, {"cols", cols}, {"dataflow", dataflow}, {"buffers", buffers}};
            used_seed = seed;
        } else if (*dma) {
            sub = "dma";
            ext = "json";
            const std::string path = resolve_workload(workload);
            const Workload w = read_workload(path);
            params = Json{{"workload", workload},
                          {"workload_sha256", file_sha256(path)},
                          {"buffers", dma_buffers.empty() ? w.buffers_name : dma_buffers},
                          {"dataflow", to_string(dma_dataflow.empty() ? w.dataflow : parse_dataflow(dma_dataflow))}};
        } else if (*infer) {
            sub = "infer";
            ext = "json";
            const auto [h, l] = plan_stages(precision);
            params = Json{{"model", model},
                          {"model_sha256", file_sha256(resolve_model(model))},
                          {"dataset", dataset},
                          {"dataset_sha256", file_sha256(resolve_dataset(dataset))},
                          {"precision", precision},
                          {"hyp", h},
                          {"lin", l},
                          {"schedule", "repeated"}};
        } else if (*angles) {
            sub = "angles";
            params = Json{{"kind", kind}, {"precision", precision}, {"steps", steps}, {"schedule", schedule}};
        } else if (*thr) {
            sub = "throughput";
            ext = "json";
            params = Json{{"precision", precision}, {"rows", rows},         {"cols", cols},
                          {"mode", mode},           {"folded", folded},     {"clock_hz", clock_hz},
                          {"macs", macs},           {"inputs", inputs}};
        } else if (*replay) {
            const std::string text = read_file(report);
            const Json manifest = extract_manifest(text);
            const std::string again = render(manifest);
            if (again == text) {
                out << "replay " << report << ": identical (" << text.size() << " bytes)\n";
                return kOk;
            }
            std::size_t at = 0;
            while (at < text.size() && at < again.size() && text[at] == again[at]) ++at;
            err << "replay " << report << ": MISMATCH at byte " << at << "\n";
            return kGate;
        }

        if (output.empty()) output = default_output(sub, ext);
        const Json manifest = make_manifest(sub, params, used_seed, output);
        bool gate = true;
        const std::string text = render_impl(manifest, &gate);
        emit(text, output, out, err);
        if (sub == "trace") {
            const TraceCheck t = trace_check(table, trace_precision);
            err << "trace " << table << " @" << trace_precision << ": max |delta| " << fmt_fixed(t.max_delta, 3)
                << " LSB (gate " << fmt_num(kTraceGate) << "), directions "
                << (t.directions_match ? "match" : "DIFFER") << ": " << (t.pass() ? "PASS" : "FAIL") << "\n";
        }
        return gate ? kOk : kGate;
    } catch (const ConfigError& e) {
        err << "error: " << e.what() << "\n";
        return kConstraint;
    } catch (const RangeError& e) {
        err << "error: " << e.what() << "\n";
        return kConstraint;
    } catch (const CapacityError& e) {
        err << "error: " << e.what() << "\n";
        return kConstraint;
    } catch (const ShapeError& e) {
        err << "error: " << e.what() << "\n";
        return kConstraint;
    } catch (const ContractError& e) {
        err << "error: " << e.what() << "\n";
        return kConstraint;
    } catch (const ParseError& e) {
        err << "error: " << e.what() << "\n";
        return kUsage;
    } catch (const Json::exception& e) {
        err << "error: malformed manifest: " << e.what() << "\n";
        return kUsage;
    } catch (const fs::filesystem_error& e) {
        err << "error: " << e.what() << "\n";
        return kUsage;
    } catch (const Error& e) {
        err << "error: " << e.what() << "\n";
        return kUsage;
    }
}

}  // namespace flexpe::cli
