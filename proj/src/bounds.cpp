#include "abstain/bounds.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "abstain/data.hpp"

namespace abstain {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
}

NormSpec::NormSpec(double p_, double q_) : p(p_), q(q_) {
  if (!(p >= 1.0) || !std::isfinite(p)) throw ConfigError("p must be finite and >= 1");
  if (!(q >= 1.0)) throw ConfigError("q must be >= 1");
}

double NormSpec::p_conj() const { return p == 1.0 ? kInf : p / (p - 1.0); }

double NormSpec::inv_p_conj() const { return 1.0 - 1.0 / p; }

double group_norm(const Matrix& w, double p, double q) {
  if (!(p >= 1.0) || !(q >= 1.0)) throw ConfigError("group norm exponents must be >= 1");
  double outer = 0.0;
  for (std::size_t r = 0; r < w.rows; ++r) {
    double inner = 0.0;
    for (std::size_t c = 0; c < w.cols; ++c) inner += std::pow(std::abs(w(r, c)), p);
    const double row_norm = std::pow(inner, 1.0 / p);
    if (std::isinf(q)) {
      outer = std::max(outer, row_norm);
    } else {
      outer += std::pow(row_norm, q);
    }
  }
  return std::isinf(q) ? outer : std::pow(outer, 1.0 / q);
}

double beta_product(std::span<const Matrix> weights, double p, double q) {
  if (weights.empty()) throw ConfigError("beta needs at least one layer");
  double beta = 1.0;
  for (const auto& w : weights) beta *= group_norm(w, p, q);
  return beta;
}

double lipschitz_const(double rho, double gamma) {
  if (!(rho >= 0.0)) throw ConfigError("rho must be nonnegative");
  return gamma * 2.0 * sigma(rho) * sigma(-rho);
}

double vector_norm(std::span<const double> x, double r) {
  if (std::isinf(r)) {
    double m = 0.0;
    for (double v : x) m = std::max(m, std::abs(v));
    return m;
  }
  double s = 0.0;
  for (double v : x) s += std::pow(std::abs(v), r);
  return std::pow(s, 1.0 / r);
}

void BoundInputs::validate() const {
  if (m < 1) throw ConfigError("m must be >= 1");
  if (!(delta > 0.0 && delta <= 1.0)) throw ConfigError("delta must lie in (0, 1]");
  if (!(rho_bar >= 0.0)) throw ConfigError("rho_bar must be nonnegative");
  if (layers < 1) throw ConfigError("network needs at least one layer");
  if (hidden_width < 1) throw ConfigError("hidden width must be positive");
  if (!(beta >= 0.0) || !(x_norm_max >= 0.0)) throw ConfigError("beta and x_norm_max must be nonnegative");
}

double width_factor(std::size_t hidden_width, std::size_t layers, const NormSpec& spec) {
  const double expo = std::max(0.0, spec.inv_p_conj() - (std::isinf(spec.q) ? 0.0 : 1.0 / spec.q));
  const double base = 2.0 * std::pow(static_cast<double>(hidden_width), expo);
  return std::pow(base, static_cast<double>(layers - 1));
}

BoundTerms generalization_bound(const BoundInputs& in, const NormSpec& spec) {
  in.validate();
  const double m = static_cast<double>(in.m);
  const double sqrt_m = std::sqrt(m);
  BoundTerms t;
  t.empirical_risk = in.empirical_risk;
  t.rho_term = in.rho_bar / sqrt_m;
  t.concentration_a = std::sqrt(8.0 * std::log(4.0 / in.delta) / m);
  t.concentration_b = std::sqrt(2.0 * std::log(2.0 / in.delta) / m);
  t.width_factor = width_factor(in.hidden_width, in.layers, spec);
  t.complexity = (2.0 * in.beta / sqrt_m * in.x_norm_max) * t.width_factor;
  t.total = t.empirical_risk + t.slack();
  return t;
}

std::vector<Matrix> prediction_path_weights(const AbstainNetwork& net) {
  std::vector<Matrix> out;
  for (const auto& l : net.body) out.push_back(l.weights);
  for (const auto& l : net.pred_head) out.push_back(l.weights);
  return out;
}

std::vector<Matrix> prediction_path_weights_with_bias(const AbstainNetwork& net) {
  std::vector<Matrix> out;
  auto add = [&](const DenseLayer& l) {
    Matrix m(l.weights.rows, l.weights.cols + 1);
    for (std::size_t r = 0; r < l.weights.rows; ++r) {
      for (std::size_t c = 0; c < l.weights.cols; ++c) m(r, c) = l.weights(r, c);
      m(r, l.weights.cols) = l.bias[r];
    }
    out.push_back(std::move(m));
  };
  for (const auto& l : net.body) add(l);
  for (const auto& l : net.pred_head) add(l);
  return out;
}

double surrogate_risk(const AbstainNetwork& net, const Dataset& ds, const LossConfig& cfg) {
  double total = 0.0;
  for (const auto& s : ds.samples) {
    const auto out = predict(net, s.features);
    total += double_sigmoid_loss(s.label * out.f, out.rho, cfg);
  }
  return total / static_cast<double>(ds.size());
}

BoundReport bound_report(const AbstainNetwork& net, const Dataset& train, const Dataset* test, const LossConfig& cfg,
                         const NormSpec& spec, double delta, std::optional<double> rho_bar) {
  if (net.has_instance_rho()) throw ScopeError("the generalization bound covers input-independent rho only");
  validate(net);
  if (train.empty()) throw ConfigError("bound needs a nonempty sample");
  if (train.dim != net.input_dim) throw ShapeError("dataset dimension does not match the network");

  BoundReport rep;
  rep.m = train.size();
  rep.p = spec.p;
  rep.q = spec.q;
  rep.delta = delta;
  rep.gamma = cfg.gamma;
  rep.d = cfg.d;
  const double rho = std::max(std::get<ScalarRho>(net.rej_mode).raw_rho, 0.0);
  rep.rho_bar = rho_bar.value_or(rho);
  if (rep.rho_bar < rho) rep.warnings.push_back("rho_bar is below the realized rho");
  rep.lipschitz = lipschitz_const(rho, cfg.gamma);
  if (cfg.gamma != 1.0) rep.warnings.push_back("bound constants assume gamma = 1");

  const auto weights = prediction_path_weights(net);
  const auto weights_b = prediction_path_weights_with_bias(net);
  rep.beta = beta_product(weights, spec.p, spec.q);
  rep.beta_with_bias = beta_product(weights_b, spec.p, spec.q);
  rep.layers = weights.size();
  rep.hidden_width = 1;
  for (std::size_t i = 0; i + 1 < weights.size(); ++i) rep.hidden_width = std::max(rep.hidden_width, weights[i].rows);

  bool has_bias = false;
  for (const auto& l : net.body) has_bias |= std::any_of(l.bias.begin(), l.bias.end(), [](double b) { return b != 0.0; });
  for (const auto& l : net.pred_head) has_bias |= std::any_of(l.bias.begin(), l.bias.end(), [](double b) { return b != 0.0; });
  if (has_bias) rep.warnings.push_back("network has nonzero biases; beta excludes them, beta_with_bias includes them");

  const double r = spec.p_conj();
  double xmax = 0.0, xmax_b = 0.0;
  std::vector<double> aug;
  for (const auto& s : train.samples) {
    xmax = std::max(xmax, vector_norm(s.features, r));
    aug.assign(s.features.begin(), s.features.end());
    aug.push_back(1.0);
    xmax_b = std::max(xmax_b, vector_norm(aug, r));
  }
  rep.x_norm_max = xmax;
  rep.empirical_risk = surrogate_risk(net, train, cfg);
  if (test != nullptr && !test->empty()) rep.test_risk = surrogate_risk(net, *test, cfg);

  BoundInputs in;
  in.beta = rep.beta;
  in.layers = rep.layers;
  in.hidden_width = rep.hidden_width;
  in.m = rep.m;
  in.delta = delta;
  in.rho_bar = rep.rho_bar;
  in.x_norm_max = xmax;
  in.empirical_risk = rep.empirical_risk;
  rep.terms = generalization_bound(in, spec);
  in.beta = rep.beta_with_bias;
  in.hidden_width = rep.hidden_width + 1;
  in.x_norm_max = xmax_b;
  rep.terms_with_bias = generalization_bound(in, spec);
  return rep;
}

}  // namespace abstain
