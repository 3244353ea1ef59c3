#include "flexpe/dma.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

namespace flexpe {

int ConvShape::out_h() const { return (H + 2 * pad - K) / stride + 1; }
int ConvShape::out_w() const { return (W + 2 * pad - K) / stride + 1; }

void ConvShape::validate() const {
    if (H < 1 || W < 1 || C_in < 1 || C_out < 1 || K < 1 || stride < 1 || pad < 0)
        throw ShapeError("conv shape fields must be positive (pad >= 0)");
    if (H + 2 * pad < K || W + 2 * pad < K)
        throw ShapeError("kernel " + std::to_string(K) + " larger than padded input " + std::to_string(H + 2 * pad) +
                         "x" + std::to_string(W + 2 * pad));
}

std::int64_t ConvShape::macs() const {
    return std::int64_t{C_out} * C_in * out_h() * out_w() * K * K;
}

ConvShape gemm_as_conv(int M, int K, int N) { return ConvShape{M, 1, K, N, 1, 1, 0}; }

std::string to_string(Dim d) {
    static const char* names[] = {"co", "ci", "oh", "ow", "kh", "kw"};
    return names[static_cast<int>(d)];
}

std::string to_string(Dataflow d) {
    return d == Dataflow::weight_stationary ? "weight_stationary" : "output_stationary";
}

Dataflow parse_dataflow(const std::string& s) {
    if (s == "weight_stationary" || s == "ws") return Dataflow::weight_stationary;
    if (s == "output_stationary" || s == "os") return Dataflow::output_stationary;
    throw ParseError("unknown dataflow '" + s + "' (expected weight_stationary or output_stationary)");
}

Buffers buffer_preset(const std::string& name) {
    if (name == "small") return {1024, 576, 1024};
    if (name == "medium") return {16384, 4608, 16384};
    if (name == "large") return {1 << 20, 1 << 16, 1 << 16};
    // explicit "ifmap,weight,psum" element counts
    Buffers b;
    char c1 = 0, c2 = 0;
    std::istringstream in(name);
    if (in >> b.ifmap >> c1 >> b.weight >> c2 >> b.psum && c1 == ',' && c2 == ',' && in.peek() == EOF &&
        b.ifmap > 0 && b.weight > 0 && b.psum > 0)
        return b;
    throw ParseError("unknown buffer preset '" + name + "' (expected small, medium, large or I,W,P)");
}

TileSchedule TileSchedule::for_dataflow(Dataflow d, Buffers b) {
    TileSchedule s;
    s.buffers = b;
    if (d == Dataflow::output_stationary) s.loop_order = {Dim::co, Dim::oh, Dim::ow, Dim::ci, Dim::kh, Dim::kw};
    return s;
}

bool TileSchedule::tiled() const {
    return std::any_of(tile.begin(), tile.end(), [](int t) { return t > 0; });
}

DmaCounter& DmaCounter::operator+=(const DmaCounter& o) {
    ifmap_reads += o.ifmap_reads;
    weight_reads += o.weight_reads;
    psum_writes += o.psum_writes;
    psum_reads += o.psum_reads;
    return *this;
}

namespace {

int extent(const ConvShape& s, Dim d) {
    switch (d) {
        case Dim::co: return s.C_out;
        case Dim::ci: return s.C_in;
        case Dim::oh: return s.out_h();
        case Dim::ow: return s.out_w();
        case Dim::kh:
        case Dim::kw: return s.K;
    }
    return 1;
}

enum class Part { whole, tile_outer, intra };

struct Loop {
    Dim dim;
    Part part;
    int tile;  // tile size for tile_outer/intra
};

std::vector<Loop> expand(const ConvShape& s, const TileSchedule& sched) {
    std::vector<Loop> nest;
    auto tile_of = [&](Dim d) {
        const int t = sched.tile[static_cast<int>(d)];
        return (t > 0 && t < extent(s, d)) ? t : 0;
    };
    for (Dim d : sched.loop_order)
        if (tile_of(d) > 0) nest.push_back({d, Part::tile_outer, tile_of(d)});
    for (Dim d : sched.loop_order)
        nest.push_back({d, tile_of(d) > 0 ? Part::intra : Part::whole, tile_of(d)});
    return nest;
}

void check_order(const TileSchedule& sched) {
    std::array<int, kDims> seen{};
    for (Dim d : sched.loop_order) ++seen[static_cast<int>(d)];
    for (int c : seen)
        if (c != 1) throw ContractError("loop order must be a permutation of co, ci, oh, ow, kh, kw");
}

struct Range {
    int lo, hi;  // [lo, hi)
    int size() const { return hi - lo; }
};

// Value ranges of one dimension, one per assignment of its loops outside `level`.
std::vector<Range> dim_cases(const ConvShape& s, const std::vector<Loop>& nest, Dim d, int level) {
    const int D = extent(s, d);
    int outer_pos = -1, inner_pos = -1, tile = 0;
    for (int i = 0; i < static_cast<int>(nest.size()); ++i) {
        if (nest[i].dim != d) continue;
        if (nest[i].part == Part::tile_outer) outer_pos = i;
        else inner_pos = i;
        tile = nest[i].tile;
    }
    const bool inner_fixed = inner_pos < level;
    std::vector<Range> out;
    if (outer_pos < 0) {
        if (inner_fixed)
            for (int v = 0; v < D; ++v) out.push_back({v, v + 1});
        else
            out.push_back({0, D});
        return out;
    }
    const bool outer_fixed = outer_pos < level;
    const int tiles = (D + tile - 1) / tile;
    if (inner_fixed) {
        for (int v = 0; v < D; ++v) out.push_back({v, v + 1});
    } else if (outer_fixed) {
        for (int o = 0; o < tiles; ++o) out.push_back({o * tile, std::min(D, (o + 1) * tile)});
    } else {
        out.push_back({0, D});
    }
    return out;
}

struct GroupStat {
    std::uint64_t sum = 0;
    std::int64_t max = 0;
};

GroupStat single_group(const std::vector<Range>& cases) {
    GroupStat g;
    for (const Range& r : cases) {
        g.sum += static_cast<std::uint64_t>(r.size());
        g.max = std::max<std::int64_t>(g.max, r.size());
    }
    return g;
}

// Distinct input rows touched by out ranges x kernel ranges.
GroupStat input_group(const std::vector<Range>& outs, const std::vector<Range>& ks, int stride, int pad, int limit) {
    GroupStat g;
    std::vector<int> mark(static_cast<std::size_t>(limit), -1);
    int stamp = 0;
    for (const Range& ro : outs) {
        for (const Range& rk : ks) {
            std::int64_t count = 0;
            for (int o = ro.lo; o < ro.hi; ++o)
                for (int k = rk.lo; k < rk.hi; ++k) {
                    const int v = o * stride + k - pad;
                    if (v < 0 || v >= limit) continue;
                    if (mark[static_cast<std::size_t>(v)] != stamp) {
                        mark[static_cast<std::size_t>(v)] = stamp;
                        ++count;
                    }
                }
            ++stamp;
            g.sum += static_cast<std::uint64_t>(count);
            g.max = std::max(g.max, count);
        }
    }
    return g;
}

struct LevelCount {
    std::uint64_t total = 0;
    std::int64_t max_footprint = 0;
};

LevelCount count_level(const ConvShape& s, const std::vector<Loop>& nest, Tensor t, int level) {
    std::array<std::vector<Range>, kDims> c;
    for (int d = 0; d < kDims; ++d) c[d] = dim_cases(s, nest, static_cast<Dim>(d), level);
    auto at = [&](Dim d) -> const std::vector<Range>& { return c[static_cast<int>(d)]; };

    std::vector<GroupStat> groups;
    std::vector<Dim> others;
    switch (t) {
        case Tensor::ifmap:
            groups.push_back(single_group(at(Dim::ci)));
            groups.push_back(input_group(at(Dim::oh), at(Dim::kh), s.stride, s.pad, s.H));
            groups.push_back(input_group(at(Dim::ow), at(Dim::kw), s.stride, s.pad, s.W));
            others = {Dim::co};
            break;
        case Tensor::weight:
            for (Dim d : {Dim::co, Dim::ci, Dim::kh, Dim::kw}) groups.push_back(single_group(at(d)));
            others = {Dim::oh, Dim::ow};
            break;
        case Tensor::psum:
            for (Dim d : {Dim::co, Dim::oh, Dim::ow}) groups.push_back(single_group(at(d)));
            others = {Dim::ci, Dim::kh, Dim::kw};
            break;
    }
    LevelCount lc{1, 1};
    for (const GroupStat& g : groups) {
        lc.total *= g.sum;
        lc.max_footprint *= g.max;
    }
    for (Dim d : others) lc.total *= at(d).size();
    return lc;
}

std::int64_t capacity(const Buffers& b, Tensor t) {
    switch (t) {
        case Tensor::ifmap: return b.ifmap;
        case Tensor::weight: return b.weight;
        case Tensor::psum: return b.psum;
    }
    return 1;
}

void check_buffers(const Buffers& b) {
    if (b.ifmap < 1 || b.weight < 1 || b.psum < 1) throw ContractError("buffer capacities must be >= 1 element");
}

constexpr std::array<Tensor, 3> kTensors{Tensor::ifmap, Tensor::weight, Tensor::psum};

DmaCounter to_counter(const std::array<std::uint64_t, 3>& fetched, std::uint64_t outputs) {
    DmaCounter c;
    c.ifmap_reads = fetched[0];
    c.weight_reads = fetched[1];
    c.psum_writes = fetched[2];
    c.psum_reads = fetched[2] - outputs;
    return c;
}

}  // namespace

void validate_schedule(const ConvShape& s, const TileSchedule& sched) {
    s.validate();
    check_order(sched);
    check_buffers(sched.buffers);
    for (int t : sched.tile)
        if (t < 0) throw ContractError("tile sizes must be >= 0");
    if (!sched.tiled()) return;
    const auto nest = expand(s, sched);
    int outer = 0;
    for (const Loop& l : nest) outer += l.part == Part::tile_outer ? 1 : 0;
    for (Tensor t : kTensors) {
        const std::int64_t fp = count_level(s, nest, t, outer).max_footprint;
        if (fp > capacity(sched.buffers, t)) {
            static const char* names[] = {"ifmap", "weight", "psum"};
            throw CapacityError(std::string("tile footprint exceeds ") + names[static_cast<int>(t)] + " buffer: " +
                                std::to_string(fp) + " > " + std::to_string(capacity(sched.buffers, t)));
        }
    }
}

TrafficPlan analytic_traffic(const ConvShape& s, const TileSchedule& sched) {
    validate_schedule(s, sched);
    const auto nest = expand(s, sched);
    const int n = static_cast<int>(nest.size());
    TrafficPlan plan;
    plan.levels = n;
    std::array<std::uint64_t, 3> fetched{};
    for (int ti = 0; ti < 3; ++ti) {
        const Tensor t = kTensors[ti];
        for (int level = 0; level <= n; ++level) {
            const LevelCount lc = count_level(s, nest, t, level);
            if (lc.max_footprint <= capacity(sched.buffers, t) || level == n) {
                plan.residency[ti] = level;
                plan.footprint[ti] = lc.max_footprint;
                fetched[ti] = lc.total;
                break;
            }
        }
    }
    plan.counters = to_counter(fetched, static_cast<std::uint64_t>(s.ofmap_elems()));
    return plan;
}

TrafficPlan simulated_traffic(const ConvShape& s, const TileSchedule& sched) {
    validate_schedule(s, sched);
    if (s.macs() > kSimulationMacLimit) throw ContractError("layer too large for the explicit DMA walk");
    const auto nest = expand(s, sched);
    const int n = static_cast<int>(nest.size());
    const int OH = s.out_h(), OW = s.out_w();

    // stamp[tensor][level][element] = epoch of last fetch
    const std::array<std::int64_t, 3> sizes{s.ifmap_elems(), s.weight_elems(), s.ofmap_elems()};
    std::array<std::vector<std::vector<std::int64_t>>, 3> stamp;
    std::array<std::vector<std::uint64_t>, 3> total;
    std::array<std::vector<std::int64_t>, 3> cur, peak;
    for (int t = 0; t < 3; ++t) {
        stamp[t].assign(static_cast<std::size_t>(n + 1),
                        std::vector<std::int64_t>(static_cast<std::size_t>(sizes[t]), -1));
        total[t].assign(static_cast<std::size_t>(n + 1), 0);
        cur[t].assign(static_cast<std::size_t>(n + 1), 0);
        peak[t].assign(static_cast<std::size_t>(n + 1), 0);
    }
    std::vector<std::int64_t> epoch(static_cast<std::size_t>(n + 1), 0);

    // Odometer over the expanded nest; trip counts of intra-tile loops depend
    // on the enclosing tile index.
    std::vector<int> idx(static_cast<std::size_t>(n), 0), trips(static_cast<std::size_t>(n), 0);
    std::array<int, kDims> tile_base{};
    auto trip_of = [&](int i) {
        const Loop& l = nest[static_cast<std::size_t>(i)];
        const int D = extent(s, l.dim);
        if (l.part == Part::whole) return D;
        if (l.part == Part::tile_outer) return (D + l.tile - 1) / l.tile;
        return std::min(l.tile, D - tile_base[static_cast<int>(l.dim)]);
    };
    auto refresh = [&](int from) {
        for (int i = from; i < n; ++i) {
            const Loop& l = nest[static_cast<std::size_t>(i)];
            if (l.part == Part::tile_outer) tile_base[static_cast<int>(l.dim)] = idx[i] * l.tile;
            trips[i] = trip_of(i);
        }
    };
    auto new_epochs = [&](int changed_loop) {
        for (int lv = changed_loop + 1; lv <= n; ++lv) {
            ++epoch[lv];
            for (int t = 0; t < 3; ++t) cur[t][lv] = 0;
        }
    };
    refresh(0);

    auto touch = [&](int t, std::int64_t e) {
        for (int lv = 0; lv <= n; ++lv) {
            auto& st = stamp[t][lv][static_cast<std::size_t>(e)];
            if (st != epoch[lv]) {
                st = epoch[lv];
                ++total[t][lv];
                peak[t][lv] = std::max(peak[t][lv], ++cur[t][lv]);
            }
        }
    };

    bool done = n == 0;
    while (!done) {
        std::array<int, kDims> v{};
        for (int i = 0; i < n; ++i) {
            const Loop& l = nest[static_cast<std::size_t>(i)];
            if (l.part == Part::intra) v[static_cast<int>(l.dim)] = tile_base[static_cast<int>(l.dim)] + idx[i];
            else if (l.part == Part::whole) v[static_cast<int>(l.dim)] = idx[i];
        }
        const int co = v[0], ci = v[1], oh = v[2], ow = v[3], kh = v[4], kw = v[5];
        const int ih = oh * s.stride + kh - s.pad, iw = ow * s.stride + kw - s.pad;
        if (ih >= 0 && ih < s.H && iw >= 0 && iw < s.W)
            touch(0, (std::int64_t{ci} * s.H + ih) * s.W + iw);
        touch(1, ((std::int64_t{co} * s.C_in + ci) * s.K + kh) * s.K + kw);
        touch(2, (std::int64_t{co} * OH + oh) * OW + ow);

        int i = n - 1;
        while (i >= 0 && ++idx[i] >= trips[i]) {
            idx[i] = 0;
            --i;
        }
        if (i < 0) {
            done = true;
        } else {
            refresh(i + 1);
            new_epochs(i);
        }
    }

    TrafficPlan plan;
    plan.levels = n;
    std::array<std::uint64_t, 3> fetched{};
    for (int t = 0; t < 3; ++t) {
        for (int lv = 0; lv <= n; ++lv) {
            if (peak[t][lv] <= capacity(sched.buffers, kTensors[t]) || lv == n) {
                plan.residency[t] = lv;
                plan.footprint[t] = peak[t][lv];
                fetched[t] = total[t][lv];
                break;
            }
        }
    }
    plan.counters = to_counter(fetched, total[2][0]);
    return plan;
}

DmaCounter naive_traffic(const ConvShape& s) {
    s.validate();
    auto valid = [&](int outs, int limit) {
        std::uint64_t c = 0;
        for (int o = 0; o < outs; ++o)
            for (int k = 0; k < s.K; ++k) {
                const int v = o * s.stride + k - s.pad;
                c += (v >= 0 && v < limit) ? 1 : 0;
            }
        return c;
    };
    DmaCounter c;
    const auto macs = static_cast<std::uint64_t>(s.macs());
    c.ifmap_reads = std::uint64_t(s.C_out) * s.C_in * valid(s.out_h(), s.H) * valid(s.out_w(), s.W);
    c.weight_reads = macs;
    c.psum_writes = macs;
    c.psum_reads = macs - static_cast<std::uint64_t>(s.ofmap_elems());
    return c;
}

DmaReport dma_report(const ConvShape& s, const TileSchedule& sched) {
    DmaReport r;
    r.shape = s;
    const TrafficPlan a = analytic_traffic(s, sched);
    r.naive = naive_traffic(s);
    r.scheduled = a.counters;
    r.residency = a.residency;
    if (s.macs() <= 200'000) r.measured = simulated_traffic(s, sched).counters;
    r.ifmap_factor = r.scheduled.ifmap_reads ? double(r.naive.ifmap_reads) / double(r.scheduled.ifmap_reads) : 1.0;
    r.weight_factor =
        r.scheduled.weight_reads ? double(r.naive.weight_reads) / double(r.scheduled.weight_reads) : 1.0;
    return r;
}

}  // namespace flexpe

namespace flexpe {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

int workload_int(const std::string& v, const std::string& where) {
    try {
        std::size_t used = 0;
        const long x = std::stol(v, &used);
        if (used == v.size() && x >= 0 && x <= (1L << 30)) return static_cast<int>(x);
    } catch (const std::logic_error&) {
    }
    throw ParseError(where + ": expected a non-negative integer, got '" + v + "'");
}

}  // namespace

Workload parse_workload(const std::string& text, const std::string& origin) {
    Workload w;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const std::string where = origin + ":" + std::to_string(lineno);
        line = trim(line.substr(0, line.find('#')));
        if (line.empty()) continue;
        if (line.rfind("layer ", 0) == 0) {
            std::istringstream ls(line.substr(6));
            WorkloadLayer l;
            ls >> l.name;
            std::string kv;
            bool have_c_in = false, have_c_out = false, have_h = false, have_w = false;
            while (ls >> kv) {
                const auto eq = kv.find('=');
                if (eq == std::string::npos) throw ParseError(where + ": expected key=value, got '" + kv + "'");
                const std::string k = kv.substr(0, eq);
                const int v = workload_int(kv.substr(eq + 1), where);
                if (k == "H") l.shape.H = v, have_h = true;
                else if (k == "W") l.shape.W = v, have_w = true;
                else if (k == "C_in") l.shape.C_in = v, have_c_in = true;
                else if (k == "C_out") l.shape.C_out = v, have_c_out = true;
                else if (k == "K") l.shape.K = v;
                else if (k == "stride") l.shape.stride = v;
                else if (k == "pad") l.shape.pad = v;
                else throw ParseError(where + ": unknown layer key '" + k + "'");
            }
            if (l.name.empty() || !have_c_in || !have_c_out || !have_h)
                throw ParseError(where + ": layer needs a name and at least H, C_in, C_out");
            if (!have_w) l.shape.W = l.shape.H;
            try {
                l.shape.validate();
            } catch (const ShapeError& e) {
                throw ShapeError(where + ": layer '" + l.name + "': " + e.what());
            }
            w.layers.push_back(std::move(l));
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw ParseError(where + ": expected 'key = value' or 'layer ...'");
        const std::string k = trim(line.substr(0, eq)), v = trim(line.substr(eq + 1));
        if (k == "name") w.name = v;
        else if (k == "buffers") {
            w.buffers = buffer_preset(v);
            w.buffers_name = v;
        } else if (k == "dataflow") w.dataflow = parse_dataflow(v);
        else if (k == "precision") w.precision = workload_int(v, where);
        else if (k == "rows") w.rows = workload_int(v, where);
        else if (k == "cols") w.cols = workload_int(v, where);
        else throw ParseError(where + ": unknown key '" + k + "'");
    }
    if (w.layers.empty()) throw ParseError(origin + ": workload has no layers");
    return w;
}

Workload read_workload(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open workload '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_workload(ss.str(), path);
}

}  // namespace flexpe
