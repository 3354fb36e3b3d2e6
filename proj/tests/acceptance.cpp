// Acceptance suite: one PASS/FAIL line per criterion, with the measured
// numbers next to the pinned tolerance. Exit status is nonzero if any
// criterion fails.

#include <sys/wait.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <json.hpp>
#include <sstream>
#include <string>
#include <thread>

#include "abstain/bounds.hpp"
#include "abstain/calibration.hpp"
#include "abstain/data.hpp"
#include "abstain/experiments.hpp"
#include "abstain/losses.hpp"
#include "abstain/training.hpp"
#include "gradcheck.hpp"

using namespace abstain;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

// --- 1 ---------------------------------------------------------------------
Outcome gradients() {
  gradcheck::Result net_total, sur_total;
  std::size_t bad_configs = 0;
  for (std::uint64_t s = 0; s < 100; ++s) {
    const auto r = gradcheck::network_config(0xACCE97 + s);
    const auto q = gradcheck::surrogate_config(0x5u + s);
    bad_configs += (r.failures + q.failures) > 0;
    net_total.checked += r.checked;
    net_total.failures += r.failures;
    net_total.worst_gap = std::max(net_total.worst_gap, r.worst_gap);
    sur_total.checked += q.checked;
    sur_total.failures += q.failures;
    sur_total.worst_gap = std::max(sur_total.worst_gap, q.worst_gap);
  }
  return {bad_configs == 0,
          fmt("100 configs, %zu network + %zu surrogate partials, %zu failing configs, worst rel gap %.2e "
              "(tol 1e-5 rel, 1e-8 abs)",
              net_total.checked, sur_total.checked, bad_configs, std::max(net_total.worst_gap, sur_total.worst_gap))};
}

// --- 2 ---------------------------------------------------------------------
Outcome calibration() {
  const auto res = run_calibration_check({});
  const auto n = res.cells.size();
  return {res.score_agreements == n && res.decision_agreements == n,
          fmt("score vs grid %zu/%zu within 2e-4 (worst %.2e); Bayes decision %zu/%zu; minimizer outside "
              "[-rho, rho] with eta in [d, 1-d]: %zu cells",
              res.score_agreements, n, res.worst_score_gap, res.decision_agreements, n, res.band_violations)};
}

// --- 3 ---------------------------------------------------------------------
Outcome psi_properties() {
  CalibrationCheckOptions o;
  o.etas = {0.5};  // cells unused here; psi checks run over (d, rho)
  const auto res = run_calibration_check(o);
  bool shape_ok = true;
  double worst_kink = 0, worst_zero = 0, min_second = INFINITY;
  for (const auto& p : res.psi) {
    shape_ok &= p.psi_at_zero == 0.0 && p.gap_at_zero < 1e-6 && p.gap_at_kink < 1e-6 && p.min_second_diff >= -1e-9;
    worst_kink = std::max(worst_kink, p.gap_at_kink);
    worst_zero = std::max(worst_zero, p.gap_at_zero);
    min_second = std::min(min_second, p.min_second_diff);
  }

  // Random finite distributions: 1-6 support points, eta and weights uniform,
  // piecewise-constant scores in [-6, 6]; d and rho from the calibration grid.
  const std::vector<double> ds{0.1, 0.2, 0.3, 0.4}, rhos{0.25, 0.5, 1.0, 2.0};
  Rng rng(0x9517);
  std::size_t violations = 0;
  double worst = 0.0, worst_rho = 0.0;
  for (int trial = 0; trial < 10000; ++trial) {
    const double d = ds[rng.below(ds.size())], rho = rhos[rng.below(rhos.size())];
    const std::size_t k = 1 + rng.below(6);
    std::vector<PointMass> dist(k);
    std::vector<double> scores(k);
    double total = 0;
    for (auto& p : dist) {
      p.eta = rng.uniform();
      p.weight = rng.uniform(0.01, 1.0);
      total += p.weight;
    }
    for (std::size_t i = 0; i < k; ++i) {
      dist[i].weight /= total;
      scores[i] = rng.uniform(-6.0, 6.0);
    }
    const auto rep = verify_excess_risk_bound(dist, scores, rho, d);
    if (!rep.holds) {
      ++violations;
      if (rep.lhs - rep.rhs > worst) {
        worst = rep.lhs - rep.rhs;
        worst_rho = rho;
      }
    }
  }
  return {shape_ok && violations == 0,
          fmt("psi(0)=0 and shape %s (gap at 0+ %.1e, at kink %.1e, min 2nd diff %.1e; tol 1e-6, -1e-9); "
              "excess-risk inequality violated in %zu/10000 draws (worst lhs-rhs %.3f at rho %.2f; slack 1e-9)",
              shape_ok ? "ok" : "FAILED", worst_zero, worst_kink, min_second, violations, worst, worst_rho)};
}

// --- 4 ---------------------------------------------------------------------
Outcome domination() {
  Rng rng(0xD0);
  std::size_t violations = 0;
  for (int i = 0; i < 100000; ++i) {
    const double m = rng.uniform(-10, 10), rho = rng.uniform(0, 5);
    const LossConfig c(rng.uniform(1e-4, 0.5), rng.uniform(0.1, 5.0));
    violations += zero_d_one_loss(m, rho, c.d) > double_sigmoid_loss(m, rho, c);
  }
  return {violations == 0, fmt("%zu violations in 1e5 draws", violations)};
}

TrainConfig synthetic_train(std::size_t epochs, double d) {
  TrainConfig tc;
  tc.loss = LossConfig(d, 1.0);
  tc.epochs = epochs;
  tc.batch_size = 32;
  tc.optimizer.kind = OptimizerKind::Adagrad;
  tc.optimizer.lr = 1e-3;
  return tc;
}

// --- 5 ---------------------------------------------------------------------
Outcome reject_demo() {
  SyntheticSetup s;
  s.train = synthetic_train(100, 0.25);
  s.seed = 5;
  const auto r = run_reject_demo(s);
  const double risk = r.test.zero_d_one_risk, base = r.baseline_test.zero_d_one_risk;
  const bool ok = risk < 0.25 && risk < base && r.rejected_in_band_fraction >= 0.70;
  return {ok, fmt("test risk %.4f vs reject-all 0.25 and rho=0 baseline %.4f; %zu rejected, %.1f%% in band "
                  "(need >= 70%%; band holds %.1f%% of test points)",
                  risk, base, r.test.rejected, 100 * r.rejected_in_band_fraction, 100 * r.band_fraction)};
}

// --- 6 ---------------------------------------------------------------------
Outcome bound_curve() {
  BoundCurveConfig c;
  c.data.train = synthetic_train(30, 0.25);
  c.data.seed = 3;
  const auto pts = run_bound_curve(c);
  bool above = pts.size() == 10, mono = true;
  double prev = INFINITY, min_gap = INFINITY;
  for (const auto& p : pts) {
    above &= p.bound_ge_test_risk;
    min_gap = std::min(min_gap, p.report.bound() - p.report.test_risk.value_or(NAN));
    const double slack = p.report.terms.complexity + p.report.terms.concentration_a + p.report.terms.concentration_b;
    mono &= slack <= prev;
    prev = slack;
  }
  return {above && mono, fmt("%zu points; bound >= test L_ds risk at all m: %s (smallest margin %.3g); "
                             "complexity+concentration nonincreasing: %s (%.4g -> %.4g)",
                             pts.size(), above ? "yes" : "no", min_gap, mono ? "yes" : "no",
                             pts.front().report.terms.complexity, pts.back().report.terms.complexity)};
}

// --- 7 ---------------------------------------------------------------------
Outcome noise() {
  NoiseConfig c;
  c.data.train = synthetic_train(100, 0.25);
  c.data.seed = 3;
  const auto rows = run_noise_experiment(c);
  const auto& clean = rows.front().clean_test;
  bool ok = clean.accuracy_unrejected.has_value();
  std::string detail = fmt("clean acc %.4f (rej %.3f)", clean.accuracy_unrejected.value_or(NAN), clean.rejection_rate);
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto& m = rows[i].clean_test;
    if (!m.accuracy_unrejected || !clean.accuracy_unrejected) {
      ok = false;
      detail += fmt("; %.0f%% noise: acc undefined (rej %.3f)", 100 * rows[i].rate, m.rejection_rate);
      continue;
    }
    const double gap = std::abs(*m.accuracy_unrejected - *clean.accuracy_unrejected);
    ok &= gap <= 0.05;
    detail += fmt("; %.0f%% noise: acc %.4f (rej %.3f, gap %.1f pp)", 100 * rows[i].rate, *m.accuracy_unrejected,
                  m.rejection_rate, 100 * gap);
  }
  return {ok, detail + " (tol 5 pp)"};
}

// --- 8 ---------------------------------------------------------------------
Outcome protocol() {
  const auto ds = load_csv(ABSTAIN_DATA_DIR "/pima.csv");
  SweepConfig cfg;
  cfg.network = NetworkSpec::from_widths({ds.dim, 64, 64, 64});
  cfg.train.loss = LossConfig(0.25, 1.0);
  cfg.train.epochs = 20;
  cfg.train.optimizer.lr = 1e-2;
  cfg.train.seed = 8;
  cfg.cv = {10, 10, 88};
  cfg.jobs = std::max(1u, std::thread::hardware_concurrency());
  const auto rows = sweep_d(ds, arithmetic_grid(0.05, 0.5, 0.05), cfg);
  std::size_t inversions = 0;
  std::string rej;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (i > 0 && rows[i].rejection.mean > rows[i - 1].rejection.mean) ++inversions;
    rej += fmt("%s%.3f", i ? " " : "", rows[i].rejection.mean);
  }
  return {rows.size() == 10 && inversions <= 1,
          fmt("%zu rows, %zu cells each; rejection by d: [%s]; %zu inversions (allowed 1)", rows.size(),
              rows.empty() ? 0 : rows[0].cells, rej.c_str(), inversions)};
}

// --- 9 ---------------------------------------------------------------------
int run_cli(const fs::path& dir, const std::string& args) {
  const std::string cmd = "cd '" + dir.string() + "' && '" ABSTAIN_CLI_PATH "' " + args + " >/dev/null 2>&1";
  const int st = std::system(cmd.c_str());
  return WIFEXITED(st) ? WEXITSTATUS(st) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

Outcome determinism() {
  const fs::path dir = fs::temp_directory_path() / ("abstain_accept_" + std::to_string(::getpid()));
  fs::remove_all(dir);
  fs::create_directories(dir);
  const std::vector<std::pair<std::string, std::string>> cmds{
      {"gen-data --n 400 --flip-prob 0.5 --seed 7 --out syn.csv", "syn.manifest.json"},
      {"gen-data --n 400 --flip-prob 0.5 --seed 8 --out test.csv", "test.manifest.json"},
      {"train --data syn.csv --epochs 5 --widths 16,16 --seed 2 --out-dir train", "train/manifest.json"},
      {"eval --model train/model.json --data test.csv --out-dir eval", "eval/manifest.json"},
      {"bound --model train/model.json --data syn.csv --test test.csv --out-dir bound", "bound/manifest.json"},
      {"sweep --data syn.csv --d-min 0.1 --d-max 0.4 --d-step 0.15 --folds 3 --reps 2 --epochs 3 --widths 8 "
       "--jobs 2 --seed 4 --out-dir sweep",
       "sweep/manifest.json"},
      {"noise --n-train 200 --n-test 200 --epochs 3 --widths 8 --seed 5 --out-dir noise", "noise/manifest.json"},
      {"bound-curve --m-start 50 --m-end 150 --m-step 50 --n-test 100 --epochs 3 --widths 8 --seed 3 "
       "--out-dir curve",
       "curve/manifest.json"},
      {"calibration-check --etas 0.3,0.7 --ds 0.2 --rhos 1 --z-step 1e-3 --out-dir cal", "cal/manifest.json"},
  };
  std::size_t identical = 0, files = 0;
  std::string failures;
  for (const auto& [args, manifest] : cmds) {
    const std::string name = args.substr(0, args.find(' '));
    if (run_cli(dir, args) != 0) {
      failures += " " + name + "(run)";
      continue;
    }
    const auto m = nlohmann::json::parse(slurp(dir / manifest));
    std::vector<std::pair<fs::path, std::string>> before;
    for (const auto& out : m["outputs"]) {
      const fs::path p = dir / out.get<std::string>();
      before.emplace_back(p, slurp(p));
      fs::remove(p);
    }
    if (run_cli(dir, "replay --manifest " + manifest) != 0) {
      failures += " " + name + "(replay)";
      continue;
    }
    bool same = true;
    for (const auto& [p, bytes] : before) {
      ++files;
      same &= fs::exists(p) && slurp(p) == bytes;
    }
    if (same) {
      ++identical;
    } else {
      failures += " " + name + "(differs)";
    }
  }
  fs::remove_all(dir);
  return {identical == cmds.size(), fmt("%zu/%zu commands replayed byte-identically (%zu files)%s%s", identical,
                                        cmds.size(), files, failures.empty() ? "" : "; failed:", failures.c_str())};
}

// --- 10 --------------------------------------------------------------------
Outcome bound_units() {
  // Single layer: the prediction head maps x straight to f.
  NetworkSpec spec;
  spec.input_dim = 3;
  const auto net = init_network(spec, 1);
  Dataset ds;
  ds.dim = 3;
  Rng rng(4);
  for (int i = 0; i < 100; ++i) ds.samples.push_back({{rng.normal(), rng.normal(), rng.normal()}, i % 2 ? 1 : -1});
  const auto rep = bound_report(net, ds, nullptr, LossConfig(0.25, 1.0), NormSpec(2, 2), 0.1);
  double w2 = 0, xmax = 0;
  for (double v : net.pred_head[0].weights.data) w2 += v * v;
  for (const auto& s : ds.samples) {
    double n2 = 0;
    for (double v : s.features) n2 += v * v;
    xmax = std::max(xmax, std::sqrt(n2));
  }
  const double expect = 2.0 * std::sqrt(w2) * xmax / std::sqrt(100.0);
  const double rel = std::abs(rep.terms.complexity - expect) / expect;
  const bool base_ok = rep.layers == 1 && rel <= 1e-15;

  const bool l_ok = lipschitz_const(0.0) == 0.5;

  bool h_ok = true;
  for (std::size_t n = 2; n <= 5; ++n) {
    const double w4 = width_factor(4, n, NormSpec(2, 2));
    h_ok &= w4 == width_factor(64, n, NormSpec(2, 2)) && w4 == width_factor(256, n, NormSpec(2, 2));
  }
  // Same weights embedded in wider layers give the same complexity factor.
  std::vector<double> factors;
  for (std::size_t h : {4u, 64u, 256u}) {
    const auto wide = init_network(NetworkSpec::from_widths({3, h, h}), 2);
    factors.push_back(bound_report(wide, ds, nullptr, LossConfig(0.25, 1.0), NormSpec(2, 2), 0.1).terms.width_factor);
  }
  h_ok &= factors[0] == factors[1] && factors[1] == factors[2];

  return {base_ok && l_ok && h_ok,
          fmt("single-layer complexity %.17g vs 2*beta*max|x|/sqrt(m) %.17g (rel %.1e); L(0) = %.17g; "
              "(2,2) width factor for H = 4, 64, 256: %g %g %g",
              rep.terms.complexity, expect, rel, lipschitz_const(0.0), factors[0], factors[1], factors[2])};
}

struct Criterion {
  int id;
  const char* name;
  double budget_s;
  std::function<Outcome()> run;
};

}  // namespace

int main() {
  const std::vector<Criterion> criteria{
      {1, "gradient suite", 10, gradients},
      {2, "calibration oracle vs brute force", 60, calibration},
      {3, "psi properties and excess-risk inequality", 120, psi_properties},
      {4, "surrogate domination", 0, domination},
      {5, "synthetic reject-option demo", 120, reject_demo},
      {6, "bound vs sample size", 300, bound_curve},
      {7, "label-noise robustness", 180, noise},
      {8, "d sweep protocol on bundled tabular data", 600, protocol},
      {9, "manifest replay determinism", 0, determinism},
      {10, "bound calculator units", 0, bound_units},
  };
  int failed = 0;
  for (const auto& c : criteria) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::string timing = fmt("%.1fs", secs);
    if (c.budget_s > 0) {
      timing += fmt(" of %.0fs", c.budget_s);
      if (secs >= c.budget_s) {
        o.pass = false;
        timing += " OVER BUDGET";
      }
    }
    failed += !o.pass;
    std::printf("[%s] %2d %s: %s [%s]\n", o.pass ? "PASS" : "FAIL", c.id, c.name, o.detail.c_str(), timing.c_str());
    std::fflush(stdout);
  }
  std::printf("%zu/%zu criteria passed\n", criteria.size() - failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
