#include "abstain/calibration.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "abstain/losses.hpp"

namespace abstain {

namespace {

/// Conditional risk written in K = tanh(z/2):
///   1 - ((theta + c)/2) (K + zeta)/(1 + K zeta) - ((theta - c)/2) (K - zeta)/(1 - K zeta)
/// with c = 1 - 2d and theta = 2 eta - 1.
double risk_in_k(double k, double theta, double c, double zeta) {
  return 1.0 - 0.5 * (theta + c) * (k + zeta) / (1.0 + k * zeta) - 0.5 * (theta - c) * (k - zeta) / (1.0 - k * zeta);
}

void check_d(double d) {
  if (!(d > 0.0 && d <= 0.5)) throw DomainError("cost of rejection d must lie in (0, 0.5]");
}

/// Minimizer for theta = 2 eta - 1 >= 0 in the K parametrization. Returns
/// K in (-1, 1) for a finite minimizer or nullopt for z -> +inf.
std::optional<double> minimizing_k(double theta, double c, double zeta) {
  if (theta == 0.0) return 0.0;
  if (theta > c || zeta == 0.0) return std::nullopt;
  const double t = excess_t(theta, 0.5 * (1.0 - c));
  const double k = t / (theta * zeta);
  if (!(k < 1.0)) return std::nullopt;
  if (risk_in_k(k, theta, c, zeta) <= 1.0 - theta) return k;
  return std::nullopt;
}

}  // namespace

CalibrationContext::CalibrationContext(double eta_, double d_, double rho_)
    : eta(eta_), d(d_), rho(rho_), zeta(std::tanh(rho_ / 2.0)) {
  if (!(eta >= 0.0 && eta <= 1.0)) throw DomainError("eta must lie in [0, 1]");
  check_d(d);
  if (!(rho >= 0.0) || !std::isfinite(rho)) throw DomainError("rho must be finite and nonnegative");
}

double conditional_risk(double z, const CalibrationContext& ctx) {
  return 2.0 * (1.0 - ctx.eta) + (2.0 * ctx.eta - 2.0 * ctx.d) * sigma(z + ctx.rho) +
         2.0 * (ctx.eta + ctx.d - 1.0) * sigma(z - ctx.rho);
}

double conditional_risk(const ExtendedScore& z, const CalibrationContext& ctx) {
  switch (z.kind) {
    case ExtendedScore::Kind::PosInf: return 2.0 * (1.0 - ctx.eta);
    case ExtendedScore::Kind::NegInf: return 2.0 * ctx.eta;
    case ExtendedScore::Kind::Finite: break;
  }
  return conditional_risk(z.value, ctx);
}

ExtendedScore optimal_score(const CalibrationContext& ctx) {
  if (ctx.eta < ctx.d) return ExtendedScore::neg_inf();
  if (ctx.eta > 1.0 - ctx.d) return ExtendedScore::pos_inf();
  const double theta = 2.0 * ctx.eta - 1.0;
  if (theta == 0.0) return ExtendedScore::finite(0.0);
  if (ctx.zeta == 0.0) {
    throw DegenerateBandError("rho = 0 collapses the rejection band at eta = " + std::to_string(ctx.eta) +
                              "; the only band point is z* = 0");
  }
  // r_eta(z) = r_{1-eta}(-z), so solve for |theta| and mirror.
  const double c = 1.0 - 2.0 * ctx.d;
  const auto k = minimizing_k(std::abs(theta), c, ctx.zeta);
  if (!k) return theta > 0.0 ? ExtendedScore::pos_inf() : ExtendedScore::neg_inf();
  const double z = 2.0 * std::atanh(*k);
  return ExtendedScore::finite(theta > 0.0 ? z : -z);
}

ExtendedScore optimal_score(const CalibrationContext& ctx, double gamma) {
  if (!(gamma > 0.0)) throw DomainError("gamma must be positive");
  auto z = optimal_score(CalibrationContext(ctx.eta, ctx.d, gamma * ctx.rho));
  if (z.is_finite()) z.value /= gamma;
  return z;
}

double optimal_conditional_risk(const CalibrationContext& ctx) {
  const double theta = 2.0 * ctx.eta - 1.0;
  const double c = 1.0 - 2.0 * ctx.d;
  if (std::abs(theta) > c) return std::min(2.0 * ctx.eta, 2.0 * (1.0 - ctx.eta));
  return h_opt(std::abs(theta), ctx.d, ctx.zeta);
}

Decision bayes_decision(double eta, double d) {
  if (eta > 1.0 - d) return Decision::Pos;
  if (eta < d) return Decision::Neg;
  return Decision::Reject;
}

Decision score_decision(const ExtendedScore& z, double rho) {
  switch (z.kind) {
    case ExtendedScore::Kind::PosInf: return Decision::Pos;
    case ExtendedScore::Kind::NegInf: return Decision::Neg;
    case ExtendedScore::Kind::Finite: break;
  }
  return decide(HeadOutputs{z.value, rho, std::nullopt});
}

double excess_t(double theta, double d) {
  const double c = 1.0 - 2.0 * d;
  if (!(theta >= 0.0 && theta <= c)) throw DomainError("T requires 0 <= theta <= 1 - 2d");
  // c - sqrt(c^2 - theta^2) == theta^2 / (c + sqrt(c^2 - theta^2))
  const double root = std::sqrt(std::max(c * c - theta * theta, 0.0));
  const double denom = c + root;
  return denom > 0.0 ? theta * theta / denom : 0.0;
}

double h_minus(double theta, double d, double zeta) {
  if (!(theta >= 0.0 && theta <= 1.0)) throw DomainError("theta must lie in [0, 1]");
  return 1.0 - zeta + 2.0 * d * zeta;
}

double h_opt(double theta, double d, double zeta) {
  if (!(theta >= 0.0 && theta <= 1.0)) throw DomainError("theta must lie in [0, 1]");
  check_d(d);
  const double c = 1.0 - 2.0 * d;
  if (theta == 0.0) return 1.0 + (2.0 * d - 1.0) * zeta;
  if (theta >= c) return 1.0 - theta;
  if (const auto k = minimizing_k(theta, c, zeta)) return risk_in_k(*k, theta, c, zeta);
  return 1.0 - theta;
}

double psi_middle_branch(double theta, double d, double zeta) {
  const double c = 1.0 - 2.0 * d;
  if (!(theta > 0.0 && theta <= c)) throw DomainError("middle branch requires 0 < theta <= 1 - 2d");
  return h_minus(theta, d, zeta) - h_opt(theta, d, zeta);
}

double psi(double theta, double d, double zeta) {
  if (!(theta >= 0.0 && theta <= 1.0)) throw DomainError("psi requires theta in [0, 1], got " + std::to_string(theta));
  check_d(d);
  if (!(zeta >= 0.0 && zeta < 1.0)) throw DomainError("zeta must lie in [0, 1)");
  const double c = 1.0 - 2.0 * d;
  if (theta == 0.0) return 0.0;
  if (theta >= c) return theta + (2.0 * d - 1.0) * zeta;
  return psi_middle_branch(theta, d, zeta);
}

ExcessRiskReport verify_excess_risk_bound(std::span<const PointMass> distribution, std::span<const double> scores,
                                          double rho, double d) {
  if (distribution.size() != scores.size()) throw std::invalid_argument("one score per support point is required");
  ExcessRiskReport rep;
  for (std::size_t i = 0; i < distribution.size(); ++i) {
    const auto& pm = distribution[i];
    const CalibrationContext ctx(pm.eta, d, rho);
    const double f = scores[i];
    rep.risk_01 += pm.weight * (pm.eta * zero_d_one_loss(f, rho, d) + (1.0 - pm.eta) * zero_d_one_loss(-f, rho, d));
    double bayes = d;
    switch (bayes_decision(pm.eta, d)) {
      case Decision::Pos: bayes = 1.0 - pm.eta; break;
      case Decision::Neg: bayes = pm.eta; break;
      case Decision::Reject: break;
    }
    rep.bayes_risk_01 += pm.weight * bayes;
    rep.risk_surrogate += pm.weight * conditional_risk(f, ctx);
    rep.bayes_risk_surrogate += pm.weight * optimal_conditional_risk(ctx);
  }
  rep.theta = std::clamp(rep.risk_01 - rep.bayes_risk_01, 0.0, 1.0);
  rep.lhs = psi(rep.theta, d, std::tanh(rho / 2.0));
  rep.rhs = rep.risk_surrogate - rep.bayes_risk_surrogate;
  rep.holds = rep.lhs <= rep.rhs + 1e-9;
  return rep;
}

ExtendedScore GridMinimum::as_extended() const {
  if (at_upper_edge) return ExtendedScore::pos_inf();
  if (at_lower_edge) return ExtendedScore::neg_inf();
  return ExtendedScore::finite(z);
}

GridMinimum grid_minimize(const CalibrationContext& ctx, const GridOptions& opts) {
  if (!(opts.step > 0.0) || !(opts.z_max > opts.z_min)) throw DomainError("invalid grid");
  const auto steps = static_cast<std::size_t>(std::llround((opts.z_max - opts.z_min) / opts.step));
  GridMinimum best;
  best.risk = INFINITY;
  std::size_t best_i = 0;
  for (std::size_t i = 0; i <= steps; ++i) {
    const double z = opts.z_min + static_cast<double>(i) * opts.step;
    const double r = conditional_risk(z, ctx);
    if (r < best.risk) {
      best.risk = r;
      best.z = z;
      best_i = i;
    }
  }
  best.at_lower_edge = best_i == 0;
  best.at_upper_edge = best_i == steps;
  return best;
}

}  // namespace abstain
