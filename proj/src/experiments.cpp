#include "abstain/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace abstain {

namespace {

NetworkSpec synthetic_spec(const SyntheticSetup& s, RejKind kind, double initial_rho) {
  NetworkSpec spec;
  spec.input_dim = 2;
  spec.body_widths = s.body_widths;
  spec.rej_kind = kind;
  spec.initial_rho = initial_rho;
  return spec;
}

TrainConfig seeded(TrainConfig tc, std::uint64_t seed) {
  tc.seed = derive_seed(seed, {3});
  return tc;
}

}  // namespace

RejectDemoResult run_reject_demo(const SyntheticSetup& setup) {
  const auto train_data = generate_sine_dataset(setup.n_train, setup.flip_margin, setup.flip_prob, derive_seed(setup.seed, {0}));
  const auto test_data = generate_sine_dataset(setup.n_test, setup.flip_margin, setup.flip_prob, derive_seed(setup.seed, {1}));
  const auto tc = seeded(setup.train, setup.seed);
  const auto init_seed = derive_seed(setup.seed, {2});

  RejectDemoResult r;
  auto trained = train(init_network(synthetic_spec(setup, RejKind::Scalar, 1.0), init_seed), train_data.data, tc);
  r.model = std::move(trained.net);
  r.history = std::move(trained.history);
  // rho starts at 0 in the baseline; the ReLU subgradient there is 0, so it stays 0.
  r.baseline = train(init_network(synthetic_spec(setup, RejKind::Scalar, 0.0), init_seed), train_data.data, tc).net;

  r.test = evaluate(r.model, test_data.data, tc.loss.d);
  r.baseline_test = evaluate(r.baseline, test_data.data, tc.loss.d);
  const auto dec = decisions(r.model, test_data.data);
  std::size_t band = 0;
  for (std::size_t i = 0; i < dec.size(); ++i) {
    if (test_data.in_band[i]) ++band;
    if (dec[i] == Decision::Reject && test_data.in_band[i]) ++r.rejected_in_band;
  }
  r.band_fraction = static_cast<double>(band) / static_cast<double>(dec.size());
  if (r.test.rejected > 0) r.rejected_in_band_fraction = static_cast<double>(r.rejected_in_band) / static_cast<double>(r.test.rejected);
  return r;
}

std::vector<BoundCurvePoint> run_bound_curve(const BoundCurveConfig& cfg) {
  if (cfg.m_step == 0 || cfg.m_start == 0 || cfg.m_end < cfg.m_start) throw ConfigError("invalid sample-size range");
  const auto& s = cfg.data;
  const std::size_t pool_n = cfg.m_end + (cfg.m_end % 2);
  const auto pool = generate_sine_dataset(pool_n, s.flip_margin, s.flip_prob, derive_seed(s.seed, {0}));
  const auto test = generate_sine_dataset(s.n_test, s.flip_margin, s.flip_prob, derive_seed(s.seed, {1}));
  const auto tc = seeded(s.train, s.seed);
  const auto init = init_network(synthetic_spec(s, RejKind::Scalar, 1.0), derive_seed(s.seed, {2}));

  std::vector<BoundCurvePoint> out;
  for (std::size_t m = cfg.m_start; m <= cfg.m_end; m += cfg.m_step) {
    std::vector<std::size_t> idx(m);
    for (std::size_t i = 0; i < m; ++i) idx[i] = i;
    const auto sample = pool.data.subset(idx);
    const auto trained = train(init, sample, tc);
    BoundCurvePoint p;
    p.report = bound_report(trained.net, sample, &test.data, tc.loss, cfg.norms, cfg.delta);
    p.bound_ge_test_risk = p.report.test_risk && p.report.bound() >= *p.report.test_risk;
    out.push_back(std::move(p));
  }
  return out;
}

std::vector<NoiseRow> run_noise_experiment(const NoiseConfig& cfg) {
  const auto& s = cfg.data;
  const auto train_data = generate_sine_dataset(s.n_train, s.flip_margin, 0.0, derive_seed(s.seed, {0}));
  const auto test_data = generate_sine_dataset(s.n_test, s.flip_margin, 0.0, derive_seed(s.seed, {1}));
  const auto tc = seeded(s.train, s.seed);
  const auto init = init_network(synthetic_spec(s, cfg.rej_kind, 1.0), derive_seed(s.seed, {2}));

  std::vector<NoiseRow> rows;
  auto run = [&](double rate, const Dataset& ds, std::size_t flips) {
    const auto trained = train(init, ds, tc);
    rows.push_back({rate, flips, evaluate(trained.net, test_data.data, tc.loss.d)});
  };
  run(0.0, train_data.data, 0);
  for (std::size_t i = 0; i < cfg.rates.size(); ++i) {
    const auto noisy = inject_uniform_noise(train_data.data, cfg.rates[i], derive_seed(s.seed, {4, i}));
    run(cfg.rates[i], noisy.data, noisy.flips);
  }
  return rows;
}

CalibrationCheck run_calibration_check(const CalibrationCheckOptions& opts) {
  CalibrationCheck out;
  out.gamma_verified = opts.gamma == 1.0;
  std::vector<double> etas = opts.etas;
  if (etas.empty())
    for (int k = 1; k <= 19; ++k) etas.push_back(k / 20.0);

  for (double eta : etas) {
    for (double d : opts.ds) {
      for (double rho : opts.rhos) {
        CalibrationCell c;
        c.eta = eta;
        c.d = d;
        c.rho = rho;
        const CalibrationContext ctx(eta, d, rho);
        // The oracle sees the gamma-rescaled problem; map its minimizer back.
        const CalibrationContext scaled(eta, d, opts.gamma * rho);
        c.closed_form = optimal_score(ctx, opts.gamma);
        c.grid = grid_minimize(scaled, opts.grid);
        auto grid_score = c.grid.as_extended();
        if (grid_score.is_finite()) grid_score.value /= opts.gamma;
        if (c.closed_form.is_finite() && grid_score.is_finite()) {
          c.score_gap = std::abs(c.closed_form.value - grid_score.value);
          c.score_agrees = c.score_gap <= opts.score_tol;
          out.worst_score_gap = std::max(out.worst_score_gap, c.score_gap);
        } else {
          c.score_agrees = c.closed_form.kind == grid_score.kind;
          c.score_gap = c.score_agrees ? 0.0 : std::numeric_limits<double>::infinity();
        }
        c.closed_decision = score_decision(c.closed_form, rho);
        c.bayes = bayes_decision(eta, d);
        c.decision_agrees = c.closed_decision == c.bayes;
        const bool band_eta = eta >= d && eta <= 1.0 - d;
        c.in_band = !band_eta || c.closed_decision == Decision::Reject;
        out.score_agreements += c.score_agrees;
        out.decision_agreements += c.decision_agrees;
        out.band_violations += !c.in_band;
        out.cells.push_back(c);
      }
    }
  }

  for (double d : opts.ds) {
    for (double rho : opts.rhos) {
      PsiCheck pc;
      pc.d = d;
      pc.rho = rho;
      pc.zeta = std::tanh(rho / 2.0);
      const double c = 1.0 - 2.0 * d;
      pc.psi_at_zero = psi(0.0, d, pc.zeta);
      pc.gap_at_zero = std::abs(psi_middle_branch(1e-9, d, pc.zeta));
      pc.gap_at_kink = std::abs(psi_middle_branch(c - 1e-9, d, pc.zeta) - (c + (2.0 * d - 1.0) * pc.zeta));

      std::vector<double> vals;
      for (int i = 0; i <= 1000; ++i) {
        const double theta = i / 1000.0;
        vals.push_back(psi(theta, d, pc.zeta));
        if (h_opt(theta, d, pc.zeta) > h_minus(theta, d, pc.zeta) + 1e-12) pc.h_order = false;
      }
      pc.min_second_diff = std::numeric_limits<double>::infinity();
      for (std::size_t i = 1; i + 1 < vals.size(); ++i) {
        pc.min_second_diff = std::min(pc.min_second_diff, vals[i + 1] - 2.0 * vals[i] + vals[i - 1]);
        if (vals[i] < vals[i - 1] - 1e-12) pc.nondecreasing = false;
      }
      for (std::size_t i = 1; i <= opts.h_grid_points; ++i) {
        const double theta = static_cast<double>(i) / static_cast<double>(opts.h_grid_points + 1);
        const auto g = grid_minimize(CalibrationContext((1.0 + theta) / 2.0, d, rho), opts.grid);
        pc.max_h_gap = std::max(pc.max_h_gap, std::abs(h_opt(theta, d, pc.zeta) - g.risk));
      }
      out.psi.push_back(pc);
    }
  }
  return out;
}

}  // namespace abstain
