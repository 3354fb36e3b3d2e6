#pragma once

#include <cstdint>
#include <vector>

#include "abstain/bounds.hpp"
#include "abstain/calibration.hpp"
#include "abstain/data.hpp"
#include "abstain/training.hpp"

namespace abstain {

/// Desk-scale experiments on the synthetic sine data. Every run derives its
/// random streams from one seed:
///   derive_seed(seed, {0}) training data, {1} test data,
///   {2} network init, {3} training, {4} label noise.

struct SyntheticSetup {
  std::size_t n_train = 1000;
  std::size_t n_test = 1000;
  double flip_margin = 0.75;
  double flip_prob = 0.5;
  std::vector<std::size_t> body_widths{64, 64, 64};
  TrainConfig train;  // loss, epochs, optimizer; seed is overwritten
  std::uint64_t seed = 0;
};

struct RejectDemoResult {
  AbstainNetwork model;
  AbstainNetwork baseline;  // same architecture with rho held at 0
  TrainHistory history;
  Metrics test;
  Metrics baseline_test;
  std::size_t rejected_in_band = 0;
  double rejected_in_band_fraction = 0.0;  // 0 when nothing is rejected
  double band_fraction = 0.0;              // share of test points in the band
};

/// Scalar-rho model vs. a no-reject baseline on noisy-band sine data.
RejectDemoResult run_reject_demo(const SyntheticSetup& setup);

struct BoundCurveConfig {
  SyntheticSetup data;  // n_train is ignored; the pool holds m_end points
  std::size_t m_start = 100;
  std::size_t m_end = 1000;
  std::size_t m_step = 100;
  NormSpec norms{2.0, 2.0};
  double delta = 0.1;
};

struct BoundCurvePoint {
  BoundReport report;
  bool bound_ge_test_risk = false;
};

/// For each m, trains a network (same initialization every time) on the
/// first m points of one pool and reports the bound against a fixed test set.
std::vector<BoundCurvePoint> run_bound_curve(const BoundCurveConfig& cfg);

struct NoiseConfig {
  SyntheticSetup data;  // flip_prob is forced to 0: the clean data is separable
  std::vector<double> rates{0.2, 0.4};
  RejKind rej_kind = RejKind::Instance;
};

struct NoiseRow {
  double rate = 0.0;
  std::size_t flips = 0;
  Metrics clean_test;
};

/// Row 0 is the clean-trained model; one row per noise rate follows. All
/// models share initialization and training seeds.
std::vector<NoiseRow> run_noise_experiment(const NoiseConfig& cfg);

// ---------------------------------------------------------------------------
// Calibration grid check

struct CalibrationCell {
  double eta = 0.0, d = 0.0, rho = 0.0;
  ExtendedScore closed_form;
  GridMinimum grid;
  double score_gap = 0.0;  // |closed - grid| for finite pairs, 0 when both unbounded alike, inf otherwise
  bool score_agrees = false;
  Decision closed_decision = Decision::Reject;
  Decision bayes = Decision::Reject;
  bool decision_agrees = false;
  bool in_band = false;  // z* in [-rho, rho] for d <= eta <= 1 - d
};

struct PsiCheck {
  double d = 0.0, rho = 0.0, zeta = 0.0;
  double psi_at_zero = 0.0;
  double gap_at_zero = 0.0;      // |middle branch at theta -> 0+|
  double gap_at_kink = 0.0;      // |middle branch at theta -> 1-2d minus (1-2d) + (2d-1) zeta|
  double min_second_diff = 0.0;  // over a theta grid of step 1e-3
  double max_h_gap = 0.0;        // max |h_opt - grid minimum| on interior theta
  bool h_order = true;           // h_opt <= h_minus everywhere on the grid
  bool nondecreasing = true;
};

struct CalibrationCheckOptions {
  std::vector<double> etas;  // default 0.05..0.95
  std::vector<double> ds{0.1, 0.2, 0.3, 0.4};
  std::vector<double> rhos{0.25, 0.5, 1.0, 2.0};
  GridOptions grid;
  double score_tol = 2e-4;
  double gamma = 1.0;
  std::size_t h_grid_points = 19;  // interior theta samples checked against the grid oracle
};

struct CalibrationCheck {
  std::vector<CalibrationCell> cells;
  std::vector<PsiCheck> psi;
  double worst_score_gap = 0.0;  // over finite/finite pairs
  std::size_t score_agreements = 0;
  std::size_t decision_agreements = 0;
  std::size_t band_violations = 0;
  bool gamma_verified = true;  // false when gamma != 1
};

CalibrationCheck run_calibration_check(const CalibrationCheckOptions& opts);

}  // namespace abstain
