#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "abstain/losses.hpp"
#include "abstain/nn.hpp"

namespace abstain {

struct Dataset;

struct ScopeError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/// Per-unit l_p norm over incoming weights, aggregated over units with l_q.
/// The dual exponent p* satisfies 1/p + 1/p* = 1 (p = 1 gives p* = inf).
struct NormSpec {
  double p = 2.0;
  double q = 2.0;

  NormSpec() = default;
  NormSpec(double p_, double q_);

  double p_conj() const;
  /// 1 / p*, zero when p* is infinite.
  double inv_p_conj() const;
};

/// (sum_rows (sum_cols |w|^p)^(q/p))^(1/q). q may be +inf (max over rows).
double group_norm(const Matrix& w, double p, double q);

/// Product of group norms over all layers; biases are not part of it.
double beta_product(std::span<const Matrix> weights, double p, double q);

/// gamma * 2 sigma(rho) sigma(-rho): Lipschitz constant of the loss in the
/// score. 0.5 at rho = 0, gamma = 1.
double lipschitz_const(double rho, double gamma = 1.0);

/// ||x||_r for r >= 1 or r = +inf.
double vector_norm(std::span<const double> x, double r);

struct BoundInputs {
  double beta = 0.0;
  std::size_t layers = 1;        // n
  std::size_t hidden_width = 1;  // H
  std::size_t m = 1;
  double delta = 0.1;
  double rho_bar = 0.0;
  double x_norm_max = 0.0;  // max_i ||x_i||_{p*}
  double empirical_risk = 0.0;

  void validate() const;
};

struct BoundTerms {
  double empirical_risk = 0.0;
  double rho_term = 0.0;           // rho_bar / sqrt(m)
  double concentration_a = 0.0;    // sqrt(8 ln(4/delta) / m)
  double concentration_b = 0.0;    // sqrt(2 ln(2/delta) / m)
  double width_factor = 0.0;       // (2 H^[1/p* - 1/q]_+)^(n-1)
  double complexity = 0.0;         // 2 beta / sqrt(m) * x_norm_max * width_factor
  double total = 0.0;

  /// Everything except the empirical risk.
  double slack() const { return rho_term + concentration_a + concentration_b + complexity; }
};

/// (2 H^[1/p* - 1/q]_+)^(n-1).
double width_factor(std::size_t hidden_width, std::size_t layers, const NormSpec& spec);

BoundTerms generalization_bound(const BoundInputs& in, const NormSpec& spec);

/// W_1..W_n of the prediction path: body layers followed by the prediction head.
std::vector<Matrix> prediction_path_weights(const AbstainNetwork& net);

/// Same matrices with each bias appended as an extra input column, as if the
/// input carried a constant 1 coordinate at every layer.
std::vector<Matrix> prediction_path_weights_with_bias(const AbstainNetwork& net);

struct BoundReport {
  std::size_t m = 0;
  double empirical_risk = 0.0;
  std::optional<double> test_risk;
  double beta = 0.0;
  double beta_with_bias = 0.0;
  double rho_bar = 0.0;
  double x_norm_max = 0.0;
  double lipschitz = 0.0;
  std::size_t layers = 0;
  std::size_t hidden_width = 0;
  double p = 2.0;
  double q = 2.0;
  double delta = 0.1;
  double gamma = 1.0;
  double d = 0.25;
  BoundTerms terms;
  BoundTerms terms_with_bias;
  std::vector<std::string> warnings;

  double bound() const { return terms.total; }
};

/// Bound for a trained scalar-rho network on its training sample, with the
/// held-out surrogate risk when a test set is supplied. rho_bar defaults to
/// the realized rho. Throws ScopeError for instance-dependent rho.
BoundReport bound_report(const AbstainNetwork& net, const Dataset& train, const Dataset* test, const LossConfig& cfg,
                         const NormSpec& spec, double delta, std::optional<double> rho_bar = std::nullopt);

/// Mean double sigmoid loss of the network on a dataset.
double surrogate_risk(const AbstainNetwork& net, const Dataset& ds, const LossConfig& cfg);

}  // namespace abstain
