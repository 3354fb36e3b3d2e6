#pragma once

#include <span>
#include <stdexcept>
#include <vector>

#include "abstain/nn.hpp"

namespace abstain {

/// Pointwise theory of the double sigmoid loss at gamma = 1: conditional
/// risk, its minimizer, the generalized Bayes rule and the excess-risk
/// transform psi. Results for another gamma follow by rescaling z and rho
/// by gamma before calling in.

struct DomainError : std::domain_error {
  using std::domain_error::domain_error;
};

/// rho == 0 with d <= eta <= 1 - d and eta != 1/2: the rejection band has
/// collapsed and the minimizer is not a point of the band.
struct DegenerateBandError : DomainError {
  using DomainError::DomainError;
};

struct CalibrationContext {
  double eta = 0.5;
  double d = 0.25;
  double rho = 0.0;
  double zeta = 0.0;  // tanh(rho / 2)

  CalibrationContext() = default;
  CalibrationContext(double eta_, double d_, double rho_);
};

/// 2(1 - eta) + (2 eta - 2d) sigma(z + rho) + 2(eta + d - 1) sigma(z - rho).
double conditional_risk(double z, const CalibrationContext& ctx);

/// Score on the extended real line. Infinite values are tagged, never stored
/// as floating infinities.
struct ExtendedScore {
  enum class Kind { Finite, PosInf, NegInf };
  Kind kind = Kind::Finite;
  double value = 0.0;  // meaningful only when kind == Finite

  static ExtendedScore finite(double z) { return {Kind::Finite, z}; }
  static ExtendedScore pos_inf() { return {Kind::PosInf, 0.0}; }
  static ExtendedScore neg_inf() { return {Kind::NegInf, 0.0}; }
  bool is_finite() const { return kind == Kind::Finite; }
};

/// Conditional risk with infinite scores taken as limits: 2(1 - eta) at
/// +inf and 2 eta at -inf.
double conditional_risk(const ExtendedScore& z, const CalibrationContext& ctx);

/// Global minimizer of conditional_risk over the extended real line.
///
/// With K = tanh(z/2) and theta = 2 eta - 1 the stationarity condition is
///   theta zeta^2 K^2 - 2 (1 - 2d) zeta K + theta = 0.
/// Outside [d, 1 - d] it has no real root and the risk is monotone in z.
/// Inside, the root K = T / (theta zeta) with
///   T = (1 - 2d) - sqrt((1 - 2d)^2 - theta^2)
/// is the local minimum; it competes with the z -> sign(theta) * inf limit
/// and is discarded when |K| >= 1.
ExtendedScore optimal_score(const CalibrationContext& ctx);

/// Same with the sigmoid sharpness gamma: the oracle runs on (gamma z, gamma rho).
ExtendedScore optimal_score(const CalibrationContext& ctx, double gamma);

/// inf_z conditional_risk(z), i.e. H(eta). Well defined for rho == 0 too.
double optimal_conditional_risk(const CalibrationContext& ctx);

/// Pos iff eta > 1 - d, Neg iff eta < d, Reject on the closed interval.
Decision bayes_decision(double eta, double d);

/// Decision of a (possibly infinite) score against the band [-rho, rho].
Decision score_decision(const ExtendedScore& z, double rho);

/// (1 - 2d) - sqrt((1 - 2d)^2 - theta^2), evaluated without cancellation.
/// Requires 0 <= theta <= 1 - 2d.
double excess_t(double theta, double d);

/// Optimal conditional risk when the score must disagree in sign with
/// 2 eta - 1, as a function of theta = 2 eta - 1 >= 0: 1 - zeta + 2 d zeta.
double h_minus(double theta, double d, double zeta);

/// H((1 + theta) / 2): 1 + (2d - 1) zeta at theta = 0, 1 - theta on
/// [1 - 2d, 1], and in between the smaller of the stationary-point risk and
/// the 1 - theta limit.
double h_opt(double theta, double d, double zeta);

/// Middle branch of psi, h_minus - h_opt on (0, 1 - 2d]. Exposed so the
/// branch limits at both ends can be checked directly.
double psi_middle_branch(double theta, double d, double zeta);

/// Excess-risk transform. Throws DomainError for theta outside [0, 1].
double psi(double theta, double d, double zeta);

struct PointMass {
  double eta = 0.5;
  double weight = 0.0;
};

struct ExcessRiskReport {
  double risk_01 = 0.0;           // R_d(f, rho)
  double bayes_risk_01 = 0.0;     // R_d(f*_d)
  double risk_surrogate = 0.0;    // R_ds(f, rho)
  double bayes_risk_surrogate = 0.0;
  double theta = 0.0;
  double lhs = 0.0;  // psi(theta)
  double rhs = 0.0;  // excess surrogate risk
  bool holds = false;
};

/// Exact expectations over a finite distribution for the piecewise-constant
/// scoring rule `scores` (one score per point) and a constant rho.
ExcessRiskReport verify_excess_risk_bound(std::span<const PointMass> distribution, std::span<const double> scores,
                                          double rho, double d);

// ---------------------------------------------------------------------------
// Brute-force oracle

struct GridOptions {
  double z_min = -20.0;
  double z_max = 20.0;
  double step = 1e-4;
};

struct GridMinimum {
  double z = 0.0;
  double risk = 0.0;
  bool at_lower_edge = false;
  bool at_upper_edge = false;

  /// Edge minima stand for the unbounded limits.
  ExtendedScore as_extended() const;
};

GridMinimum grid_minimize(const CalibrationContext& ctx, const GridOptions& opts = {});

}  // namespace abstain
