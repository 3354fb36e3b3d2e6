#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>

#include "abstain/losses.hpp"
#include "abstain/nn.hpp"
#include "abstain/rng.hpp"
#include "oracles.hpp"

namespace gradcheck {

struct Result {
  std::size_t checked = 0;
  std::size_t failures = 0;
  double worst_gap = 0.0;  // max |analytic - numeric| / max(|a|, |n|, 1e-8)
};

inline void record(Result& r, double analytic, double numeric) {
  ++r.checked;
  if (!oracle::grad_close(analytic, numeric)) ++r.failures;
  const double scale = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
  r.worst_gap = std::max(r.worst_gap, std::abs(analytic - numeric) / scale);
}

/// Smallest distance of any ReLU input from its kink; finite differences
/// straddling a kink are meaningless.
inline double kink_distance(const abstain::AbstainNetwork& net, const abstain::ForwardTrace& t) {
  double best = INFINITY;
  auto scan = [&](const std::vector<abstain::LayerTrace>& traces, const abstain::LayerStack& layers) {
    for (std::size_t i = 0; i < traces.size(); ++i)
      if (layers[i].activation == abstain::Activation::ReLU)
        for (double v : traces[i].pre) best = std::min(best, std::abs(v));
  };
  scan(t.body, net.body);
  scan(t.pred, net.pred_head);
  if (const auto* inst = std::get_if<abstain::InstanceRho>(&net.rej_mode)) scan(t.rej, inst->layers);
  if (net.aux_head) scan(t.aux, *net.aux_head);
  best = std::min(best, std::abs(t.rho_pre));
  return best;
}

/// One randomized configuration: architecture, loss settings, input and
/// label all come from `seed`. Every parameter is perturbed.
inline Result network_config(std::uint64_t seed, double h = 1e-6) {
  using namespace abstain;
  Rng rng(seed);
  NetworkSpec spec;
  spec.input_dim = 1 + rng.below(4);
  const auto depth = 1 + rng.below(3);
  for (std::uint64_t i = 0; i < depth; ++i) spec.body_widths.push_back(2 + rng.below(5));
  if (rng.uniform() < 0.3) spec.pred_hidden.push_back(2 + rng.below(3));
  spec.rej_kind = rng.uniform() < 0.5 ? RejKind::Scalar : RejKind::Instance;
  if (spec.rej_kind == RejKind::Instance && rng.uniform() < 0.5) spec.rej_hidden.push_back(2 + rng.below(3));
  spec.aux_head = rng.uniform() < 0.4;
  spec.initial_rho = rng.uniform(0.2, 1.5);
  const LossConfig cfg(rng.uniform(0.02, 0.5), rng.uniform(0.5, 2.0), spec.aux_head ? rng.uniform(0.0, 1.0) : 1.0);

  auto net = init_network(spec, rng.next());
  // Nonzero biases exercise the bias gradients too.
  for (auto* stack : {&net.body, &net.pred_head}) {
    for (auto& l : *stack)
      for (auto& b : l.bias) b = rng.uniform(-0.3, 0.3);
  }
  const int label = rng.uniform() < 0.5 ? 1 : -1;

  std::vector<double> x(spec.input_dim);
  ForwardTrace trace;
  HeadOutputs out;
  for (int attempt = 0; attempt < 50; ++attempt) {
    for (auto& v : x) v = rng.normal();
    std::tie(out, trace) = forward(net, x);
    if (kink_distance(net, trace) > 1e-3) break;
  }
  const auto sl = sample_loss(out, label, cfg);
  auto grads = backward(net, trace, sl.upstream);

  auto loss = [&] { return sample_loss(predict(net, x), label, cfg).loss; };
  auto params = parameter_blocks(net);
  auto gblocks = parameter_blocks(grads, net);
  Result r;
  for (std::size_t b = 0; b < params.size(); ++b)
    for (std::size_t i = 0; i < params[b].size(); ++i)
      record(r, gblocks[b][i], oracle::central_diff(params[b][i], loss, h));
  return r;
}

/// Surrogate-only check at a random (margin, rho, d, gamma).
inline Result surrogate_config(std::uint64_t seed, double h = 1e-6) {
  using namespace abstain;
  Rng rng(seed);
  double margin = rng.uniform(-4.0, 4.0);
  double rho = rng.uniform(0.0, 3.0);
  const LossConfig cfg(rng.uniform(0.01, 0.5), rng.uniform(0.25, 3.0));
  const auto g = double_sigmoid_grads(margin, rho, cfg);
  Result r;
  record(r, g.d_margin, oracle::central_diff(margin, [&] { return double_sigmoid_loss(margin, rho, cfg); }, h));
  record(r, g.d_rho, oracle::central_diff(rho, [&] { return double_sigmoid_loss(margin, rho, cfg); }, h));
  return r;
}

}  // namespace gradcheck
