#include "abstain/losses.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace abstain {

namespace {
constexpr double kExpClamp = 500.0;

void check_label(int label) {
  if (label != 1 && label != -1) throw std::invalid_argument("label must be +1 or -1, got " + std::to_string(label));
}
}  // namespace

LossConfig::LossConfig(double d_, double gamma_, double alpha_) : d(d_), gamma(gamma_), alpha(alpha_) { validate(); }

void LossConfig::validate() const {
  if (!(d > 0.0 && d <= 0.5)) throw ConfigError("cost of rejection d must lie in (0, 0.5], got " + std::to_string(d));
  if (!(gamma > 0.0)) throw ConfigError("gamma must be positive");
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw ConfigError("alpha must lie in [0, 1]");
}

double sigma(double a, double gamma) {
  const double e = std::clamp(gamma * a, -kExpClamp, kExpClamp);
  return 1.0 / (1.0 + std::exp(e));
}

double zero_d_one_loss(double margin, double rho, double d) {
  if (margin < -rho) return 1.0;
  if (std::abs(margin) <= rho) return d;
  return 0.0;
}

double double_sigmoid_loss(double margin, double rho, const LossConfig& cfg) {
  return 2.0 * cfg.d * sigma(margin - rho, cfg.gamma) + 2.0 * (1.0 - cfg.d) * sigma(margin + rho, cfg.gamma);
}

SurrogateGrads double_sigmoid_grads(double margin, double rho, const LossConfig& cfg) {
  // d/da sigma(a) = -gamma sigma(a) (1 - sigma(a)).
  const double s1 = sigma(margin - rho, cfg.gamma);
  const double s2 = sigma(margin + rho, cfg.gamma);
  const double a = 2.0 * cfg.d * s1 * (1.0 - s1);
  const double b = 2.0 * (1.0 - cfg.d) * s2 * (1.0 - s2);
  return {-cfg.gamma * (a + b), cfg.gamma * (a - b)};
}

double aux_cross_entropy(const std::array<double, 2>& logits, int label) {
  check_label(label);
  const double hi = std::max(logits[0], logits[1]);
  const double lse = hi + std::log(std::exp(logits[0] - hi) + std::exp(logits[1] - hi));
  return lse - logits[label > 0 ? 0 : 1];
}

std::array<double, 2> aux_cross_entropy_grads(const std::array<double, 2>& logits, int label) {
  check_label(label);
  const double hi = std::max(logits[0], logits[1]);
  const double e0 = std::exp(logits[0] - hi);
  const double e1 = std::exp(logits[1] - hi);
  std::array<double, 2> p{e0 / (e0 + e1), e1 / (e0 + e1)};
  p[label > 0 ? 0 : 1] -= 1.0;
  return p;
}

double combined_loss(double margin, double rho, const std::optional<std::array<double, 2>>& aux_logits, int label,
                     const LossConfig& cfg) {
  if (cfg.alpha < 1.0 && !aux_logits) throw ConfigError("alpha < 1 requires auxiliary head outputs");
  if (cfg.alpha == 1.0) return double_sigmoid_loss(margin, rho, cfg);
  if (cfg.alpha == 0.0) return aux_cross_entropy(*aux_logits, label);
  return cfg.alpha * double_sigmoid_loss(margin, rho, cfg) + (1.0 - cfg.alpha) * aux_cross_entropy(*aux_logits, label);
}

SampleLoss sample_loss(const HeadOutputs& out, int label, const LossConfig& cfg) {
  check_label(label);
  const double y = static_cast<double>(label);
  const double margin = y * out.f;
  SampleLoss s;
  s.loss = combined_loss(margin, out.rho, out.aux_logits, label, cfg);
  if (cfg.alpha > 0.0) {
    const auto g = double_sigmoid_grads(margin, out.rho, cfg);
    s.upstream.d_f = cfg.alpha * y * g.d_margin;
    s.upstream.d_rho = cfg.alpha * g.d_rho;
  }
  if (cfg.alpha < 1.0) {
    const auto g = aux_cross_entropy_grads(*out.aux_logits, label);
    s.upstream.d_aux = {(1.0 - cfg.alpha) * g[0], (1.0 - cfg.alpha) * g[1]};
  }
  return s;
}

}  // namespace abstain
