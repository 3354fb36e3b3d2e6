#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "abstain/rng.hpp"

namespace abstain {

struct ShapeError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct ConfigError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/// Row-major dense matrix; rows are output units, columns incoming weights.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}

  double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

  bool operator==(const Matrix&) const = default;
};

enum class Activation { ReLU, Identity };

struct DenseLayer {
  Matrix weights;  // out_dim x in_dim
  std::vector<double> bias;
  Activation activation = Activation::ReLU;

  std::size_t in_dim() const { return weights.cols; }
  std::size_t out_dim() const { return weights.rows; }

  bool operator==(const DenseLayer&) const = default;
};

using LayerStack = std::vector<DenseLayer>;

/// Input-independent rejection bandwidth; realized as ReLU(raw_rho).
struct ScalarRho {
  double raw_rho = 1.0;
  bool operator==(const ScalarRho&) const = default;
};

/// Rejection bandwidth computed from the body features; realized as ReLU(head(h)).
struct InstanceRho {
  LayerStack layers;
  bool operator==(const InstanceRho&) const = default;
};

using RejectionMode = std::variant<ScalarRho, InstanceRho>;

/// Feed-forward body shared by a prediction head, a rejection head and an
/// optional two-logit auxiliary head. All heads read the body output.
struct AbstainNetwork {
  std::size_t input_dim = 0;
  LayerStack body;
  LayerStack pred_head;
  RejectionMode rej_mode = ScalarRho{};
  std::optional<LayerStack> aux_head;

  bool has_instance_rho() const { return std::holds_alternative<InstanceRho>(rej_mode); }
  /// Width of the representation the heads consume.
  std::size_t feature_dim() const { return body.empty() ? input_dim : body.back().out_dim(); }

  bool operator==(const AbstainNetwork&) const = default;
};

/// Throws ShapeError when layer dimensions do not chain or heads have the
/// wrong output arity.
void validate(const AbstainNetwork& net);

struct HeadOutputs {
  double f = 0.0;
  double rho = 0.0;
  std::optional<std::array<double, 2>> aux_logits;
};

struct LayerTrace {
  std::vector<double> input;
  std::vector<double> pre;
  std::vector<double> post;  // after activation and dropout
  std::vector<double> mask;  // inverted-dropout multipliers; empty when inactive
};

struct ForwardTrace {
  std::vector<LayerTrace> body;
  std::vector<LayerTrace> pred;
  std::vector<LayerTrace> rej;
  std::vector<LayerTrace> aux;
  double rho_pre = 0.0;  // input to the ReLU that realizes rho
};

/// Dropout applied to body outputs during training. rate == 0 disables it.
struct DropoutPlan {
  double rate = 0.0;
  Rng* rng = nullptr;
};

std::pair<HeadOutputs, ForwardTrace> forward(const AbstainNetwork& net, std::span<const double> x,
                                             DropoutPlan dropout = {});

/// Output-only forward pass; no trace is retained.
HeadOutputs predict(const AbstainNetwork& net, std::span<const double> x);

double rho_of(const AbstainNetwork& net, std::span<const double> x);

enum class Decision { Pos, Neg, Reject };

const char* to_string(Decision d);

/// Pos iff f > rho, Neg iff f < -rho, Reject on the closed band |f| <= rho.
Decision decide(const HeadOutputs& out);

struct LayerGrads {
  std::vector<double> weights;
  std::vector<double> bias;
};

struct ParamGrads {
  std::vector<LayerGrads> body;
  std::vector<LayerGrads> pred;
  std::vector<LayerGrads> rej;
  std::vector<LayerGrads> aux;
  double raw_rho = 0.0;

  /// Zero gradients shaped like net.
  static ParamGrads zeros_like(const AbstainNetwork& net);
  void add_scaled(const ParamGrads& other, double scale);
  void scale(double s);
};

/// Gradient of the scalar loss with respect to the head outputs.
struct Upstream {
  double d_f = 0.0;
  double d_rho = 0.0;
  std::array<double, 2> d_aux{0.0, 0.0};
};

/// Reverse-mode pass. Accumulates into grads, which must be shaped like net.
void backward(const AbstainNetwork& net, const ForwardTrace& trace, const Upstream& upstream,
              ParamGrads& grads);

ParamGrads backward(const AbstainNetwork& net, const ForwardTrace& trace, const Upstream& upstream);

/// Flat views over every trainable block in a fixed order shared by
/// networks and gradients: body, pred, rej, aux (weights then bias per
/// layer), then raw_rho when the rejection mode is scalar.
std::vector<std::span<double>> parameter_blocks(AbstainNetwork& net);
std::vector<std::span<double>> parameter_blocks(ParamGrads& grads, const AbstainNetwork& net);
std::vector<std::span<const double>> parameter_blocks(const AbstainNetwork& net);

std::size_t parameter_count(const AbstainNetwork& net);
double parameter_norm(const AbstainNetwork& net);

// ---------------------------------------------------------------------------
// Construction

enum class RejKind { Scalar, Instance };

struct NetworkSpec {
  std::size_t input_dim = 0;
  std::vector<std::size_t> body_widths;  // hidden ReLU layers
  std::vector<std::size_t> pred_hidden;  // ReLU layers before the scalar output
  RejKind rej_kind = RejKind::Scalar;
  std::vector<std::size_t> rej_hidden;   // instance head only
  bool aux_head = false;
  std::vector<std::size_t> aux_hidden;
  double initial_rho = 1.0;

  /// Parses "2,64,64,64": the first entry is the input dimension and the rest
  /// are body widths.
  static NetworkSpec from_widths(const std::vector<std::size_t>& widths);
};

/// He fan-in normal weights, zero biases, rejection bandwidth starting at
/// initial_rho. Identical seeds give bit-identical networks.
AbstainNetwork init_network(const NetworkSpec& spec, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Optimizers

enum class OptimizerKind { Adagrad, SGDMomentum };

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::Adagrad;
  double lr = 1e-3;
  double epsilon = 1e-8;   // Adagrad
  double momentum = 0.9;   // SGDMomentum
  double weight_decay = 0.0;
};

struct OptimizerState {
  OptimizerConfig config;
  std::vector<std::vector<double>> slots;  // accumulators or velocities, per block

  explicit OptimizerState(OptimizerConfig cfg) : config(cfg) {
    if (!(cfg.lr >= 0.0)) throw ConfigError("learning rate must be nonnegative");
    if (!(cfg.weight_decay >= 0.0)) throw ConfigError("weight decay must be nonnegative");
  }

  /// One update over matching blocks. Slots are created on first use.
  void step(std::span<const std::span<double>> params, std::span<const std::span<double>> grads);
};

}  // namespace abstain
