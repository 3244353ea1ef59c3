#pragma once

#include <cstdint>
#include <deque>
#include <span>
#include <string>
#include <vector>

#include "flexpe/cordic.hpp"
#include "flexpe/fixedpoint.hpp"

namespace flexpe {

enum class Precision { FxP4, FxP8, FxP16, FxP32, H12, H24 };
enum class AfSel { sigmoid, tanh, relu, softmax, exp };
enum class CtrlOp { af, mac };
enum class ExecMode { iterative, pipelined };

std::string to_string(Precision p);
std::string to_string(AfSel a);
Precision parse_precision(const std::string& s);  // "4", "FxP8", "H12", ...
AfSel parse_af(const std::string& s);
Precision precision_from_bits(int bits);
int precision_bits(Precision p);  // nominal width: 4, 8, 16, 32, 12, 24

// Datapath formats for a lane of `bits` width.
QFormat af_format(int bits);    // Q(N, N-3); FxP4 Q(4, 2)
QFormat mac_format(int bits);   // Q(N, N-4)
QFormat wide_format(QFormat af);  // two extra integer bits for e^z and 1 + e^z
QFormat sum_format(QFormat af, std::size_t capacity);  // wide + log2(capacity) guard bits

LaneConfig lanes_for(Precision p);
int lanes_per_issue(Precision p);  // 16, 8, 4, 1 (two words per issue for packed modes)

struct PeConfig {
    Precision precision = Precision::FxP16;
    AfSel sel_af = AfSel::sigmoid;
    CtrlOp ctrl_op = CtrlOp::af;
    ExecMode exec_mode = ExecMode::pipelined;
    StagePlan stage_plan = default_stage_plan(16);
    bool folded = false;  // FxP8/16 issued on FxP32 hardware with stage folding

    static PeConfig make(Precision p, AfSel af, CtrlOp op = CtrlOp::af, ExecMode mode = ExecMode::pipelined);
};

void validate(const PeConfig& cfg);

// Scalar activation functions. Inputs beyond +-1.1182 saturate to the rail.
FxpValue af_sigmoid(const FxpValue& z, const StagePlan& plan);
FxpValue af_tanh(const FxpValue& z, const StagePlan& plan);
FxpValue af_exp(const FxpValue& z, const StagePlan& plan);  // result in wide_format(z.format)
FxpValue af_relu(const FxpValue& v);
SimdWord af_relu(const SimdWord& w);

class SoftmaxFifo {
public:
    SoftmaxFifo(QFormat entry_format, std::size_t capacity = 64);

    void push(const FxpValue& e);
    FxpValue pop();
    std::size_t size() const { return entries_.size(); }
    std::size_t capacity() const { return capacity_; }
    const FxpValue& running_sum() const { return sum_; }
    QFormat entry_format() const { return entry_format_; }

private:
    QFormat entry_format_;
    std::size_t capacity_;
    std::deque<FxpValue> entries_;
    FxpValue sum_;
};

std::vector<FxpValue> softmax_run(std::span<const FxpValue> xs, const StagePlan& plan, std::size_t capacity = 64);

// AF dispatch over every lane of `w`; softmax normalizes across the word's lanes.
SimdWord pe_execute(const SimdWord& w, const PeConfig& cfg);
// MAC dispatch: lane-wise acc + a*z via lr_mac.
SimdWord pe_execute(const SimdWord& a, const SimdWord& z, const SimdWord& acc, const PeConfig& cfg);

struct PipelineTiming {
    std::int64_t cycles_elapsed = 0;
    std::vector<int> in_flight;  // lane results resident per stage at the steady-state midpoint
    std::int64_t results_ready = 0;
    int fill_depth = 0;
    int results_per_issue = 0;
    std::int64_t issues = 0;
};

int op_depth(const PeConfig& cfg);  // CORDIC stages one result passes through
PipelineTiming pipeline_timing(const PeConfig& cfg, std::int64_t n_inputs);

}  // namespace flexpe
