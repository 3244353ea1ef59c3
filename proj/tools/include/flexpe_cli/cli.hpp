#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

namespace flexpe::cli {

enum ExitCode { kOk = 0, kUsage = 2, kConstraint = 3, kGate = 4 };

// Runs one `flexpe` invocation; args exclude the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

using Json = nlohmann::ordered_json;

// Manifest: {subcommand, params, seed, tool_version, outputs}. `params` holds
// every resolved parameter, so render(manifest) alone determines the report.
Json make_manifest(const std::string& subcommand, Json params, std::uint64_t seed, const std::string& output);
// Report text for a manifest. Fresh runs and `replay` share it, so reports
// regenerate byte-for-byte.
std::string render(const Json& manifest);
// Embedded manifest of a CSV (`# manifest: {...}` first line) or JSON report.
Json extract_manifest(const std::string& report);

std::string resolve_model(const std::string& name);    // "fixture", "fixture-conv" or a path
std::string resolve_dataset(const std::string& name);  // "fixture" or a path
std::string resolve_workload(const std::string& name); // path, else data/workloads/<name>

struct GoldenRow {
    int i;
    double E, X, Y, Z;
    int d;
};
std::span<const GoldenRow> golden_hyperbolic();  // z = 0.5, 9 plain stages
std::span<const GoldenRow> golden_division();    // 0.521 / 2.51, 9 stages

// Deltas are in units of 2^-13, the FxP16 AF LSB, at every precision: the
// golden values carry four decimals.
inline constexpr double kTraceLsb = 0x1.0p-13;
inline constexpr double kTraceGate = 2.0;

struct TraceRow {
    std::string run;  // printed-E | true-E
    int i = 0;
    double E = 0, X = 0, Y = 0, Z = 0;
    int d = 0;
    GoldenRow ref{};
    double dx = 0, dy = 0, dz = 0;  // LSB
    bool z_gated = true;
};

struct TraceCheck {
    std::vector<TraceRow> rows;
    double max_delta = 0;  // over gated columns
    bool directions_match = true;
    bool pass() const { return directions_match && max_delta <= kTraceGate; }
};

TraceCheck trace_check(const std::string& table, int precision);

}  // namespace flexpe::cli
