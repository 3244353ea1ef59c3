#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "flexpe/cordic.hpp"
#include "flexpe/dma.hpp"
#include "flexpe/fixedpoint.hpp"
#include "flexpe/flex_pe.hpp"

namespace flexpe {

enum class LayerKind { dense, conv, relu, sigmoid, tanh, softmax };
std::string to_string(LayerKind k);
LayerKind parse_layer_kind(const std::string& s);
bool has_weights(LayerKind k);

struct LayerSpec {
    LayerKind kind = LayerKind::dense;
    std::string name;
    std::vector<int> in_shape;
    std::vector<int> out_shape;
    ConvShape conv;  // conv only
    std::string weight_name, bias_name;
    std::vector<double> weight;  // dense: out x in; conv: C_out x C_in x K x K
    std::vector<double> bias;
    double psum_max = 0;  // calibrated max |partial sum| in real units
};

struct ModelSpec {
    std::string name;
    std::vector<int> input_shape;
    std::vector<LayerSpec> layers;
    std::string digest;  // of the blob it was loaded from; empty when built in memory
};

struct Dataset {
    std::string name;
    std::vector<int> input_shape;
    std::vector<double> inputs;  // samples x prod(input_shape)
    std::vector<int> labels;
    std::string digest;

    std::size_t samples() const { return labels.size(); }
    std::size_t features() const;
    std::span<const double> sample(std::size_t i) const;
};

// Pre-activation normalization in front of every AF.
inline constexpr double kMaxNorm = 5.5;
// ReLU inputs saturate at the integer range of the AF lane format, Q(N, N-3).
inline constexpr double kReluRail = 4.0;
// Weights are mapped into the LR-mode z range with this much margin below 7.968.
inline constexpr double kWeightRail = 7.5;
// Calibrated partial sums land at this magnitude in the MAC format.
inline constexpr double kPsumTarget = 7.0;

// Checks that layer shapes compose and scale factors are positive. ShapeError names both layers.
void validate(const ModelSpec& m);

ModelSpec load_model(const std::string& path);
ModelSpec parse_model(const std::string& bytes, const std::string& origin = "<memory>");
std::string serialize_model(const ModelSpec& m);
void save_model(const std::string& path, const ModelSpec& m);

Dataset load_dataset(const std::string& path);
Dataset parse_dataset(const std::string& bytes, const std::string& origin = "<memory>");
std::string serialize_dataset(const Dataset& d);
void save_dataset(const std::string& path, const Dataset& d);

struct QuantizedTensor {
    std::vector<std::int64_t> raw;
    QFormat format{};
    double scale = 1;  // real = raw * lsb * scale

    double real(std::size_t i) const;
};

// Symmetric per-tensor: scale = max|t| / rail, entries RNE-quantized after division.
QuantizedTensor quantize_tensor(std::span<const double> t, QFormat f, double rail);
// MAC lane format of `p` with kWeightRail.
QuantizedTensor quantize_tensor(std::span<const double> t, Precision p);

struct Logits {
    std::vector<double> values;  // samples x classes, real units
    std::size_t classes = 0;
};

Logits reference_forward(const ModelSpec& m, const Dataset& d);

struct FixedRun {
    Logits logits;                          // dequantized pre-softmax outputs
    std::vector<std::int64_t> logits_raw;   // MAC-format raw values of the last MAC layer
    std::vector<double> softmax;            // fixed softmax outputs (empty without a softmax layer)
};

FixedRun fixed_forward(const ModelSpec& m, const Dataset& d, Precision p, const StagePlan& plan);

struct AccuracyReport {
    Precision precision = Precision::FxP16;
    int hyp_stages = 0;
    int lin_stages = 0;
    std::size_t samples = 0;
    double top1_fixed = 0;
    double top1_reference = 0;
    double delta = 0;  // percentage points, fixed - reference
    double top1_softmax = 0;
    double logit_mae = 0;
    std::string calibration = "min-max";
};

std::size_t argmax(std::span<const double> v);
double top1(const Logits& l, std::span<const int> labels);

// Throws ConfigError when the model needs an AF the precision cannot run.
AccuracyReport run_inference(const ModelSpec& m, const Dataset& d, Precision p,
                             std::optional<StagePlan> plan = std::nullopt);

}  // namespace flexpe
