#include "abstain/nn.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace abstain {

namespace {

void check_stack(const LayerStack& stack, std::size_t in_dim, const char* name) {
  std::size_t expected = in_dim;
  for (std::size_t i = 0; i < stack.size(); ++i) {
    const auto& layer = stack[i];
    if (layer.weights.cols != expected || layer.weights.data.size() != layer.weights.rows * layer.weights.cols ||
        layer.bias.size() != layer.weights.rows || layer.weights.rows == 0) {
      throw ShapeError(std::string(name) + " layer " + std::to_string(i) + " does not chain: expected " +
                       std::to_string(expected) + " inputs, got " + std::to_string(layer.weights.cols));
    }
    expected = layer.weights.rows;
  }
}

void check_head(const LayerStack& stack, std::size_t in_dim, std::size_t out_dim, const char* name) {
  if (stack.empty()) throw ShapeError(std::string(name) + " has no layers");
  check_stack(stack, in_dim, name);
  if (stack.back().out_dim() != out_dim) {
    throw ShapeError(std::string(name) + " must end in " + std::to_string(out_dim) + " output(s)");
  }
}

void dense_forward(const DenseLayer& layer, std::span<const double> in, LayerTrace& t, const DropoutPlan* dropout) {
  const std::size_t rows = layer.weights.rows;
  const std::size_t cols = layer.weights.cols;
  t.input.assign(in.begin(), in.end());
  t.pre.resize(rows);
  t.post.resize(rows);
  const double* w = layer.weights.data.data();
  for (std::size_t r = 0; r < rows; ++r) {
    double acc = layer.bias[r];
    const double* row = w + r * cols;
    for (std::size_t c = 0; c < cols; ++c) acc += row[c] * in[c];
    t.pre[r] = acc;
    t.post[r] = layer.activation == Activation::ReLU ? std::max(acc, 0.0) : acc;
  }
  t.mask.clear();
  if (dropout != nullptr && dropout->rate > 0.0 && dropout->rng != nullptr) {
    const double keep = 1.0 - dropout->rate;
    t.mask.resize(rows);
    for (std::size_t r = 0; r < rows; ++r) {
      t.mask[r] = dropout->rng->uniform() < keep ? 1.0 / keep : 0.0;
      t.post[r] *= t.mask[r];
    }
  }
}

/// Runs a stack on `in`; returns a view of the final output held in the trace.
std::span<const double> stack_forward(const LayerStack& stack, std::span<const double> in,
                                      std::vector<LayerTrace>& traces, const DropoutPlan* dropout) {
  traces.resize(stack.size());
  std::span<const double> cur = in;
  for (std::size_t i = 0; i < stack.size(); ++i) {
    dense_forward(stack[i], cur, traces[i], dropout);
    cur = traces[i].post;
  }
  return cur;
}

/// Backpropagates `grad_out` (gradient w.r.t. the stack output) and returns
/// the gradient w.r.t. the stack input.
std::vector<double> stack_backward(const LayerStack& stack, const std::vector<LayerTrace>& traces,
                                   std::vector<double> grad_out, std::vector<LayerGrads>& grads) {
  if (traces.size() != stack.size() || grads.size() != stack.size()) {
    throw ShapeError("trace does not match network structure");
  }
  for (std::size_t li = stack.size(); li-- > 0;) {
    const auto& layer = stack[li];
    const auto& t = traces[li];
    const std::size_t rows = layer.weights.rows;
    const std::size_t cols = layer.weights.cols;
    if (t.pre.size() != rows || t.input.size() != cols) throw ShapeError("trace does not match network structure");
    // Through dropout and activation.
    for (std::size_t r = 0; r < rows; ++r) {
      double g = grad_out[r];
      if (!t.mask.empty()) g *= t.mask[r];
      if (layer.activation == Activation::ReLU && !(t.pre[r] > 0.0)) g = 0.0;
      grad_out[r] = g;
    }
    auto& lg = grads[li];
    std::vector<double> grad_in(cols, 0.0);
    const double* w = layer.weights.data.data();
    for (std::size_t r = 0; r < rows; ++r) {
      const double g = grad_out[r];
      if (g == 0.0) continue;
      lg.bias[r] += g;
      double* gw = lg.weights.data() + r * cols;
      const double* row = w + r * cols;
      for (std::size_t c = 0; c < cols; ++c) {
        gw[c] += g * t.input[c];
        grad_in[c] += g * row[c];
      }
    }
    grad_out = std::move(grad_in);
  }
  return grad_out;
}

std::vector<LayerGrads> zeros_for(const LayerStack& stack) {
  std::vector<LayerGrads> out;
  out.reserve(stack.size());
  for (const auto& l : stack) out.push_back({std::vector<double>(l.weights.data.size(), 0.0), std::vector<double>(l.bias.size(), 0.0)});
  return out;
}

void add_scaled_stack(std::vector<LayerGrads>& into, const std::vector<LayerGrads>& from, double s) {
  for (std::size_t i = 0; i < into.size(); ++i) {
    for (std::size_t j = 0; j < into[i].weights.size(); ++j) into[i].weights[j] += s * from[i].weights[j];
    for (std::size_t j = 0; j < into[i].bias.size(); ++j) into[i].bias[j] += s * from[i].bias[j];
  }
}

template <typename Fn>
void for_each_stack(const AbstainNetwork& net, Fn&& fn) {
  fn(net.body, 0);
  fn(net.pred_head, 1);
  if (const auto* inst = std::get_if<InstanceRho>(&net.rej_mode)) fn(inst->layers, 2);
  if (net.aux_head) fn(*net.aux_head, 3);
}

DenseLayer he_layer(std::size_t in, std::size_t out, Activation act, Rng& rng) {
  DenseLayer layer;
  layer.weights = Matrix(out, in);
  layer.bias.assign(out, 0.0);
  layer.activation = act;
  const double scale = std::sqrt(2.0 / static_cast<double>(in));
  for (auto& w : layer.weights.data) w = scale * rng.normal();
  return layer;
}

LayerStack build_head(std::size_t in, std::span<const std::size_t> hidden, std::size_t out, Rng& rng) {
  LayerStack stack;
  std::size_t cur = in;
  for (auto h : hidden) {
    if (h == 0) throw ConfigError("layer widths must be positive");
    stack.push_back(he_layer(cur, h, Activation::ReLU, rng));
    cur = h;
  }
  stack.push_back(he_layer(cur, out, Activation::Identity, rng));
  return stack;
}

}  // namespace

void validate(const AbstainNetwork& net) {
  if (net.input_dim == 0) throw ShapeError("input_dim must be positive");
  check_stack(net.body, net.input_dim, "body");
  const std::size_t feat = net.feature_dim();
  check_head(net.pred_head, feat, 1, "prediction head");
  if (const auto* inst = std::get_if<InstanceRho>(&net.rej_mode)) check_head(inst->layers, feat, 1, "rejection head");
  if (net.aux_head) check_head(*net.aux_head, feat, 2, "auxiliary head");
}

std::pair<HeadOutputs, ForwardTrace> forward(const AbstainNetwork& net, std::span<const double> x,
                                             DropoutPlan dropout) {
  if (x.size() != net.input_dim) {
    throw ShapeError("input has dimension " + std::to_string(x.size()) + ", network expects " +
                     std::to_string(net.input_dim));
  }
  ForwardTrace trace;
  HeadOutputs out;
  const DropoutPlan* dp = dropout.rate > 0.0 ? &dropout : nullptr;
  auto features = stack_forward(net.body, x, trace.body, dp);
  out.f = stack_forward(net.pred_head, features, trace.pred, nullptr)[0];
  if (const auto* scalar = std::get_if<ScalarRho>(&net.rej_mode)) {
    trace.rho_pre = scalar->raw_rho;
  } else {
    trace.rho_pre = stack_forward(std::get<InstanceRho>(net.rej_mode).layers, features, trace.rej, nullptr)[0];
  }
  out.rho = std::max(trace.rho_pre, 0.0);
  if (net.aux_head) {
    auto logits = stack_forward(*net.aux_head, features, trace.aux, nullptr);
    out.aux_logits = std::array<double, 2>{logits[0], logits[1]};
  }
  return {out, std::move(trace)};
}

HeadOutputs predict(const AbstainNetwork& net, std::span<const double> x) { return forward(net, x).first; }

double rho_of(const AbstainNetwork& net, std::span<const double> x) {
  if (x.size() != net.input_dim) throw ShapeError("input dimension mismatch");
  if (const auto* scalar = std::get_if<ScalarRho>(&net.rej_mode)) return std::max(scalar->raw_rho, 0.0);
  return forward(net, x).first.rho;
}

const char* to_string(Decision d) {
  switch (d) {
    case Decision::Pos: return "pos";
    case Decision::Neg: return "neg";
    case Decision::Reject: return "reject";
  }
  return "?";
}

Decision decide(const HeadOutputs& out) {
  if (std::abs(out.f) <= out.rho) return Decision::Reject;
  return out.f > out.rho ? Decision::Pos : Decision::Neg;
}

ParamGrads ParamGrads::zeros_like(const AbstainNetwork& net) {
  ParamGrads g;
  g.body = zeros_for(net.body);
  g.pred = zeros_for(net.pred_head);
  if (const auto* inst = std::get_if<InstanceRho>(&net.rej_mode)) g.rej = zeros_for(inst->layers);
  if (net.aux_head) g.aux = zeros_for(*net.aux_head);
  return g;
}

void ParamGrads::add_scaled(const ParamGrads& other, double s) {
  add_scaled_stack(body, other.body, s);
  add_scaled_stack(pred, other.pred, s);
  add_scaled_stack(rej, other.rej, s);
  add_scaled_stack(aux, other.aux, s);
  raw_rho += s * other.raw_rho;
}

void ParamGrads::scale(double s) {
  for (auto* stack : {&body, &pred, &rej, &aux}) {
    for (auto& lg : *stack) {
      for (auto& v : lg.weights) v *= s;
      for (auto& v : lg.bias) v *= s;
    }
  }
  raw_rho *= s;
}

void backward(const AbstainNetwork& net, const ForwardTrace& trace, const Upstream& up, ParamGrads& grads) {
  if (trace.body.size() != net.body.size() || trace.pred.size() != net.pred_head.size()) {
    throw ShapeError("trace does not match network structure");
  }
  const std::size_t feat = net.feature_dim();
  std::vector<double> d_features(feat, 0.0);
  auto accumulate = [&](const std::vector<double>& g) {
    for (std::size_t i = 0; i < feat; ++i) d_features[i] += g[i];
  };

  accumulate(stack_backward(net.pred_head, trace.pred, {up.d_f}, grads.pred));

  // rho = ReLU(rho_pre); zero subgradient on the closed dead region.
  const double d_rho_pre = trace.rho_pre > 0.0 ? up.d_rho : 0.0;
  if (const auto* inst = std::get_if<InstanceRho>(&net.rej_mode)) {
    if (trace.rej.size() != inst->layers.size()) throw ShapeError("trace does not match rejection head");
    accumulate(stack_backward(inst->layers, trace.rej, {d_rho_pre}, grads.rej));
  } else {
    grads.raw_rho += d_rho_pre;
  }

  if (net.aux_head) {
    if (trace.aux.size() != net.aux_head->size()) throw ShapeError("trace does not match auxiliary head");
    accumulate(stack_backward(*net.aux_head, trace.aux, {up.d_aux[0], up.d_aux[1]}, grads.aux));
  }

  if (!net.body.empty()) stack_backward(net.body, trace.body, std::move(d_features), grads.body);
}

ParamGrads backward(const AbstainNetwork& net, const ForwardTrace& trace, const Upstream& upstream) {
  ParamGrads g = ParamGrads::zeros_like(net);
  backward(net, trace, upstream, g);
  return g;
}

std::vector<std::span<double>> parameter_blocks(AbstainNetwork& net) {
  std::vector<std::span<double>> blocks;
  auto add = [&](LayerStack& stack) {
    for (auto& l : stack) {
      blocks.emplace_back(l.weights.data);
      blocks.emplace_back(l.bias);
    }
  };
  add(net.body);
  add(net.pred_head);
  if (auto* inst = std::get_if<InstanceRho>(&net.rej_mode)) add(inst->layers);
  if (net.aux_head) add(*net.aux_head);
  if (auto* scalar = std::get_if<ScalarRho>(&net.rej_mode)) blocks.emplace_back(&scalar->raw_rho, 1);
  return blocks;
}

std::vector<std::span<const double>> parameter_blocks(const AbstainNetwork& net) {
  auto blocks = parameter_blocks(const_cast<AbstainNetwork&>(net));
  return {blocks.begin(), blocks.end()};
}

std::vector<std::span<double>> parameter_blocks(ParamGrads& g, const AbstainNetwork& net) {
  std::vector<std::span<double>> blocks;
  auto add = [&](std::vector<LayerGrads>& stack) {
    for (auto& l : stack) {
      blocks.emplace_back(l.weights);
      blocks.emplace_back(l.bias);
    }
  };
  add(g.body);
  add(g.pred);
  add(g.rej);
  add(g.aux);
  if (!net.has_instance_rho()) blocks.emplace_back(&g.raw_rho, 1);
  return blocks;
}

std::size_t parameter_count(const AbstainNetwork& net) {
  std::size_t n = 0;
  for (auto b : parameter_blocks(net)) n += b.size();
  return n;
}

double parameter_norm(const AbstainNetwork& net) {
  double s = 0.0;
  for (auto b : parameter_blocks(net))
    for (double v : b) s += v * v;
  return std::sqrt(s);
}

NetworkSpec NetworkSpec::from_widths(const std::vector<std::size_t>& widths) {
  if (widths.empty()) throw ConfigError("network widths are empty");
  NetworkSpec spec;
  spec.input_dim = widths[0];
  spec.body_widths.assign(widths.begin() + 1, widths.end());
  return spec;
}

AbstainNetwork init_network(const NetworkSpec& spec, std::uint64_t seed) {
  if (spec.input_dim == 0) throw ConfigError("input dimension must be positive");
  Rng root(seed);
  AbstainNetwork net;
  net.input_dim = spec.input_dim;

  Rng body_rng = root.child(0);
  std::size_t cur = spec.input_dim;
  for (auto w : spec.body_widths) {
    if (w == 0) throw ConfigError("layer widths must be positive");
    net.body.push_back(he_layer(cur, w, Activation::ReLU, body_rng));
    cur = w;
  }
  Rng pred_rng = root.child(1);
  net.pred_head = build_head(cur, spec.pred_hidden, 1, pred_rng);

  if (spec.rej_kind == RejKind::Scalar) {
    net.rej_mode = ScalarRho{spec.initial_rho};
  } else {
    Rng rej_rng = root.child(2);
    InstanceRho inst{build_head(cur, spec.rej_hidden, 1, rej_rng)};
    inst.layers.back().bias[0] = spec.initial_rho;
    net.rej_mode = std::move(inst);
  }
  if (spec.aux_head) {
    Rng aux_rng = root.child(3);
    net.aux_head = build_head(cur, spec.aux_hidden, 2, aux_rng);
  }
  return net;
}

void OptimizerState::step(std::span<const std::span<double>> params, std::span<const std::span<double>> grads) {
  if (params.size() != grads.size()) throw ShapeError("optimizer: parameter/gradient block count mismatch");
  if (slots.empty()) {
    slots.reserve(params.size());
    for (auto p : params) slots.emplace_back(p.size(), 0.0);
  }
  if (slots.size() != params.size()) throw ShapeError("optimizer: state does not match parameters");
  const double lr = config.lr;
  const double decay = lr * config.weight_decay;
  for (std::size_t b = 0; b < params.size(); ++b) {
    auto p = params[b];
    auto g = grads[b];
    auto& s = slots[b];
    if (p.size() != g.size() || p.size() != s.size()) throw ShapeError("optimizer: block shape mismatch");
    for (std::size_t i = 0; i < p.size(); ++i) {
      if (decay != 0.0) p[i] -= decay * p[i];
      if (config.kind == OptimizerKind::Adagrad) {
        s[i] += g[i] * g[i];
        p[i] -= lr * g[i] / (std::sqrt(s[i]) + config.epsilon);
      } else {
        s[i] = config.momentum * s[i] - lr * g[i];
        p[i] += s[i];
      }
    }
  }
}

}  // namespace abstain
