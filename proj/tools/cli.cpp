#include "cli.hpp"

#include <openssl/evp.h>

#include <CLI11.hpp>
#include <charconv>
#include <chrono>
#include <cmath>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <json.hpp>
#include <sstream>

#include "abstain/bounds.hpp"
#include "abstain/calibration.hpp"
#include "abstain/data.hpp"
#include "abstain/experiments.hpp"
#include "abstain/model_io.hpp"
#include "abstain/training.hpp"

namespace abstain::cli {

namespace fs = std::filesystem;
using json = nlohmann::json;

std::string sha256_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  const std::string bytes = buf.str();
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha256(), nullptr) != 1)
    throw std::runtime_error("sha256 failed for " + path);
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out += hex[md[i] >> 4];
    out += hex[md[i] & 0xF];
  }
  return out;
}

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string num(double v) {
  if (std::isnan(v)) return "nan";
  char buf[64];
  auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

std::string utc_now() {
  const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

void write_json(const fs::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

json opt_num(std::optional<double> v) { return v ? json(*v) : json(nullptr); }

// Non-finite doubles become strings; JSON has no literal for them.
json finite_or_tag(double v) {
  if (std::isfinite(v)) return v;
  if (std::isnan(v)) return "nan";
  return v > 0 ? "+inf" : "-inf";
}

// ---------------------------------------------------------------------------
// flags

struct Globals {
  std::uint64_t seed = 0;
  std::size_t jobs = 1;
  std::string out_dir = ".";
};

struct NetFlags {
  std::vector<std::size_t> widths{64, 64, 64};
  std::vector<std::size_t> pred_hidden;
  std::string rej = "scalar";
  std::vector<std::size_t> rej_hidden;
  bool aux = false;
  double initial_rho = 1.0;
};

struct TrainFlags {
  double d = 0.25;
  double gamma = 1.0;
  double alpha = 1.0;
  std::size_t epochs = 100;
  std::size_t batch = 32;
  std::string optimizer = "adagrad";
  double lr = 1e-3;
  double momentum = 0.9;
  double weight_decay = 0.0;
  std::string schedule = "constant";
  std::size_t patience = 5;
  double dropout = 0.0;
  bool no_shuffle = false;
};

void add_globals(CLI::App* app, Globals& g) {
  app->add_option("--seed", g.seed, "base random seed");
  app->add_option("--jobs", g.jobs, "worker threads")->check(CLI::PositiveNumber);
  app->add_option("--out-dir", g.out_dir, "output directory");
}

void add_loss(CLI::App* app, TrainFlags& t) {
  app->add_option("--d", t.d, "cost of rejection");
  app->add_option("--gamma", t.gamma, "sigmoid slope");
}

void add_net(CLI::App* app, NetFlags& n, const std::string& default_rej) {
  n.rej = default_rej;
  app->add_option("--widths", n.widths, "body layer widths")->delimiter(',');
  app->add_option("--pred-hidden", n.pred_hidden, "prediction head hidden widths")->delimiter(',');
  app->add_option("--rej", n.rej, "rejection head")->check(CLI::IsMember({"scalar", "instance"}));
  app->add_option("--rej-hidden", n.rej_hidden, "instance rejection head hidden widths")->delimiter(',');
  app->add_flag("--aux", n.aux, "attach the auxiliary classifier head");
  app->add_option("--initial-rho", n.initial_rho, "initial rejection width");
}

void add_train(CLI::App* app, TrainFlags& t) {
  add_loss(app, t);
  app->add_option("--alpha", t.alpha, "weight of the double sigmoid term");
  app->add_option("--epochs", t.epochs, "training epochs");
  app->add_option("--batch-size", t.batch, "mini-batch size");
  app->add_option("--optimizer", t.optimizer)->check(CLI::IsMember({"adagrad", "sgd"}));
  app->add_option("--lr", t.lr, "learning rate");
  app->add_option("--momentum", t.momentum, "momentum for sgd");
  app->add_option("--weight-decay", t.weight_decay);
  app->add_option("--schedule", t.schedule)->check(CLI::IsMember({"constant", "plateau"}));
  app->add_option("--patience", t.patience, "plateau epochs before halving lr");
  app->add_option("--dropout", t.dropout, "dropout on body outputs");
  app->add_flag("--no-shuffle", t.no_shuffle);
}

LossConfig loss_config(const TrainFlags& t) { return LossConfig(t.d, t.gamma, t.alpha); }

TrainConfig train_config(const TrainFlags& t) {
  TrainConfig c;
  c.loss = loss_config(t);
  c.epochs = t.epochs;
  c.batch_size = t.batch;
  c.optimizer.kind = t.optimizer == "sgd" ? OptimizerKind::SGDMomentum : OptimizerKind::Adagrad;
  c.optimizer.lr = t.lr;
  c.optimizer.momentum = t.momentum;
  c.optimizer.weight_decay = t.weight_decay;
  c.schedule.kind = t.schedule == "plateau" ? ScheduleKind::HalveOnPlateau : ScheduleKind::Constant;
  c.schedule.patience = t.patience;
  c.dropout_rate = t.dropout;
  c.shuffle = !t.no_shuffle;
  c.validate();
  return c;
}

NetworkSpec network_spec(const NetFlags& n, const TrainFlags& t, std::size_t input_dim) {
  NetworkSpec s;
  s.input_dim = input_dim;
  s.body_widths = n.widths;
  s.pred_hidden = n.pred_hidden;
  s.rej_kind = n.rej == "instance" ? RejKind::Instance : RejKind::Scalar;
  s.rej_hidden = n.rej_hidden;
  s.aux_head = n.aux || t.alpha < 1.0;
  s.initial_rho = n.initial_rho;
  return s;
}

// ---------------------------------------------------------------------------
// manifest

struct Run {
  std::string command;
  std::vector<std::string> argv;
  json config = json::object();
  json seeds = json::object();
  json inputs = json::object();
  json outputs = json::array();
  std::string started = utc_now();

  void input(const std::string& path) { inputs[path] = sha256_file(path); }
  void output(const fs::path& path) { outputs.push_back(path.string()); }

  void write_manifest(const fs::path& path) const {
    json m;
    m["command"] = command;
    m["argv"] = argv;
    m["config"] = config;
    m["seeds"] = seeds;
    m["inputs"] = inputs;
    m["outputs"] = outputs;
    m["tool_version"] = kToolVersion;
    m["started"] = started;
    m["finished"] = utc_now();
    write_json(path, m);
  }
};

json resolved_options(const CLI::App* app) {
  json cfg = json::object();
  for (const CLI::Option* opt : app->get_options()) {
    const std::string name = opt->get_single_name();
    if (name == "help" || name.empty()) continue;
    if (opt->count() > 0) {
      const auto& r = opt->results();
      cfg[name] = r.size() == 1 ? json(r.front()) : json(r);
    } else {
      cfg[name] = opt->get_default_str();
    }
  }
  return cfg;
}

json synthetic_seeds(std::uint64_t seed) {
  return {{"base", seed},
          {"train_data", derive_seed(seed, {0})},
          {"test_data", derive_seed(seed, {1})},
          {"init", derive_seed(seed, {2})},
          {"training", derive_seed(seed, {3})},
          {"noise", derive_seed(seed, {4})}};
}

// ---------------------------------------------------------------------------
// serializers

json metrics_json(const Metrics& m, double d) {
  return {{"n", m.n},
          {"d", d},
          {"accuracy", opt_num(m.accuracy_unrejected)},
          {"rejection_rate", m.rejection_rate},
          {"risk", m.zero_d_one_risk},
          {"correct", m.correct},
          {"wrong", m.wrong},
          {"rejected", m.rejected}};
}

json terms_json(const BoundTerms& t) {
  return {{"empirical_risk", t.empirical_risk}, {"rho_term", t.rho_term},
          {"concentration_a", t.concentration_a}, {"concentration_b", t.concentration_b},
          {"width_factor", t.width_factor}, {"complexity", t.complexity},
          {"slack", t.slack()}, {"total", t.total}};
}

json bound_json(const BoundReport& r) {
  json j{{"m", r.m},
         {"empirical_risk", r.empirical_risk},
         {"test_risk", opt_num(r.test_risk)},
         {"beta", r.beta},
         {"beta_with_bias", r.beta_with_bias},
         {"rho_bar", r.rho_bar},
         {"x_norm_max", r.x_norm_max},
         {"lipschitz", r.lipschitz},
         {"layers", r.layers},
         {"hidden_width", r.hidden_width},
         {"p", r.p},
         {"q", finite_or_tag(r.q)},
         {"delta", r.delta},
         {"gamma", r.gamma},
         {"d", r.d},
         {"bound", r.bound()},
         {"bound_with_bias", r.terms_with_bias.total},
         {"terms", terms_json(r.terms)},
         {"terms_with_bias", terms_json(r.terms_with_bias)},
         {"warnings", r.warnings}};
  return j;
}

json score_json(const ExtendedScore& s) {
  switch (s.kind) {
    case ExtendedScore::Kind::PosInf: return "+inf";
    case ExtendedScore::Kind::NegInf: return "-inf";
    default: return s.value;
  }
}

std::string history_csv(const TrainHistory& h) {
  std::string out = "epoch,loss,risk,rejection_rate,rho_mean\n";
  for (const auto& e : h)
    out += std::to_string(e.epoch) + "," + num(e.loss) + "," + num(e.risk) + "," + num(e.rejection_rate) + "," +
           num(e.rho_mean) + "\n";
  return out;
}

std::string mean_std_cells(const MeanStd& m) {
  if (m.count == 0) return "NA,NA";
  return num(m.mean) + "," + (m.count > 1 ? num(m.std) : std::string("NA"));
}

// ---------------------------------------------------------------------------
// commands

struct GenFlags {
  std::size_t n = 0;
  double flip_margin = 0.75;
  double flip_prob = 0.5;
  std::string out;
};

int cmd_gen_data(const Globals& g, const GenFlags& f, Run& run) {
  const fs::path out = f.out.empty() ? fs::path(g.out_dir) / "synthetic.csv" : fs::path(f.out);
  const auto syn = generate_sine_dataset(f.n, f.flip_margin, f.flip_prob, g.seed);
  run.seeds = {{"base", g.seed}};
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  write_csv(out, syn.data);
  const fs::path stem = out.parent_path() / out.stem();
  const fs::path meta_path = stem.string() + ".meta.json";
  write_json(meta_path, {{"seed", g.seed},
                         {"n", syn.meta.n},
                         {"flip_margin", syn.meta.flip_margin},
                         {"flip_prob", syn.meta.flip_prob},
                         {"class_counts", {{"+1", syn.meta.pos_count}, {"-1", syn.meta.neg_count}}},
                         {"flips", syn.meta.flips},
                         {"in_band", syn.meta.in_band}});
  run.output(out);
  run.output(meta_path);
  run.write_manifest(stem.string() + ".manifest.json");
  std::cout << "wrote " << syn.meta.n << " samples to " << out.string() << " (" << syn.meta.flips << " flips)\n";
  return 0;
}

int cmd_train(const Globals& g, const std::string& data, const NetFlags& nf, const TrainFlags& tf, Run& run) {
  run.input(data);
  const auto ds = load_csv(data);
  auto tc = train_config(tf);
  tc.seed = derive_seed(g.seed, {3});
  const auto init_seed = derive_seed(g.seed, {2});
  run.seeds = {{"base", g.seed}, {"init", init_seed}, {"training", tc.seed}};
  const auto result = train(init_network(network_spec(nf, tf, ds.dim), init_seed), ds, tc);
  const fs::path dir(g.out_dir);
  save_model(dir / "model.json", result.net);
  write_text(dir / "history.csv", history_csv(result.history));
  run.output(dir / "model.json");
  run.output(dir / "history.csv");
  run.write_manifest(dir / "manifest.json");
  const auto& last = result.history.back();
  std::cout << "trained " << result.history.size() << " epochs; final loss " << num(last.loss) << ", risk "
            << num(last.risk) << "\n";
  return 0;
}

int cmd_eval(const Globals& g, const std::string& model, const std::string& data, const TrainFlags& tf, Run& run) {
  run.input(model);
  run.input(data);
  const auto net = load_model(model);
  const auto ds = load_csv(data);
  if (ds.dim != net.input_dim)
    throw ShapeError("model expects " + std::to_string(net.input_dim) + " features, " + data + " has " +
                     std::to_string(ds.dim));
  const auto m = evaluate(net, ds, tf.d);
  const fs::path dir(g.out_dir);
  write_json(dir / "metrics.json", metrics_json(m, tf.d));
  run.output(dir / "metrics.json");
  run.write_manifest(dir / "manifest.json");
  std::cout << "risk " << num(m.zero_d_one_risk) << ", rejection " << num(m.rejection_rate) << "\n";
  return 0;
}

struct SweepFlags {
  std::string data;
  double d_min = 0.05, d_max = 0.5, d_step = 0.05;
  std::size_t folds = 10, reps = 10;
  bool no_standardize = false;
};

int cmd_sweep(const Globals& g, const SweepFlags& sf, const NetFlags& nf, const TrainFlags& tf, Run& run) {
  run.input(sf.data);
  const auto ds = load_csv(sf.data);
  SweepConfig cfg;
  cfg.network = network_spec(nf, tf, ds.dim);
  cfg.train = train_config(tf);
  cfg.train.seed = g.seed;
  cfg.cv = SplitPlan{sf.folds, sf.reps, derive_seed(g.seed, {5})};
  cfg.standardize = !sf.no_standardize;
  cfg.jobs = g.jobs;
  run.seeds = {{"base", g.seed}, {"splits", cfg.cv.seed}, {"cells", "derive_seed(base, {rep, fold, d_index})"}};
  const auto grid = arithmetic_grid(sf.d_min, sf.d_max, sf.d_step);
  const auto rows = sweep_d(ds, grid, cfg);
  std::string csv = "d,acc_mean,acc_std,rej_mean,rej_std,risk_mean,risk_std\n";
  for (const auto& r : rows)
    csv += num(r.d) + "," + mean_std_cells(r.accuracy) + "," + mean_std_cells(r.rejection) + "," +
           mean_std_cells(r.risk) + "\n";
  const fs::path dir(g.out_dir);
  write_text(dir / "sweep.csv", csv);
  run.output(dir / "sweep.csv");
  run.write_manifest(dir / "manifest.json");
  std::cout << csv;
  return 0;
}

struct SynthFlags {
  std::size_t n_train = 1000;
  std::size_t n_test = 1000;
  double flip_margin = 0.75;
  double flip_prob = 0.5;
};

void add_synth(CLI::App* app, SynthFlags& s, bool with_flip_prob) {
  app->add_option("--n-train", s.n_train, "training samples");
  app->add_option("--n-test", s.n_test, "test samples");
  app->add_option("--flip-margin", s.flip_margin, "half-width of the noisy band");
  if (with_flip_prob) app->add_option("--flip-prob", s.flip_prob, "flip probability inside the band");
}

SyntheticSetup synthetic_setup(const Globals& g, const SynthFlags& s, const NetFlags& nf, const TrainFlags& tf) {
  SyntheticSetup setup;
  setup.n_train = s.n_train;
  setup.n_test = s.n_test;
  setup.flip_margin = s.flip_margin;
  setup.flip_prob = s.flip_prob;
  setup.body_widths = nf.widths;
  setup.train = train_config(tf);
  setup.seed = g.seed;
  return setup;
}

int cmd_noise(const Globals& g, const SynthFlags& s, const std::vector<double>& rates, const NetFlags& nf,
              const TrainFlags& tf, Run& run) {
  NoiseConfig cfg;
  cfg.data = synthetic_setup(g, s, nf, tf);
  cfg.data.flip_prob = 0.0;
  cfg.rates = rates;
  cfg.rej_kind = nf.rej == "instance" ? RejKind::Instance : RejKind::Scalar;
  run.seeds = synthetic_seeds(g.seed);
  const auto rows = run_noise_experiment(cfg);
  const auto& clean = rows.front().clean_test;
  std::string csv = "rate,flips,accuracy,rejection_rate,risk,accuracy_gap\n";
  for (const auto& r : rows) {
    const auto& m = r.clean_test;
    std::string gap = "NA";
    if (m.accuracy_unrejected && clean.accuracy_unrejected) gap = num(*m.accuracy_unrejected - *clean.accuracy_unrejected);
    csv += num(r.rate) + "," + std::to_string(r.flips) + "," +
           (m.accuracy_unrejected ? num(*m.accuracy_unrejected) : std::string("NA")) + "," + num(m.rejection_rate) +
           "," + num(m.zero_d_one_risk) + "," + gap + "\n";
  }
  const fs::path dir(g.out_dir);
  write_text(dir / "noise.csv", csv);
  run.output(dir / "noise.csv");
  run.write_manifest(dir / "manifest.json");
  std::cout << csv;
  return 0;
}

struct BoundFlags {
  std::string model, data, test;
  double p = 2.0, q = 2.0, delta = 0.1;
  std::optional<double> rho_bar;
};

void add_norms(CLI::App* app, double& p, double& q, double& delta) {
  app->add_option("--p", p, "input-side norm exponent")->check(CLI::Range(1.0, 1e300));
  app->add_option("--q", q, "layer norm exponent (inf allowed)");
  app->add_option("--delta", delta, "confidence parameter");
}

int cmd_bound(const Globals& g, const BoundFlags& bf, const TrainFlags& tf, Run& run) {
  run.input(bf.model);
  run.input(bf.data);
  if (!bf.test.empty()) run.input(bf.test);
  const auto net = load_model(bf.model);
  const auto train_ds = load_csv(bf.data);
  std::optional<Dataset> test;
  if (!bf.test.empty()) test = load_csv(bf.test);
  const auto rep = bound_report(net, train_ds, test ? &*test : nullptr, loss_config(tf), NormSpec(bf.p, bf.q), bf.delta,
                                bf.rho_bar);
  const fs::path dir(g.out_dir);
  write_json(dir / "bound.json", bound_json(rep));
  run.output(dir / "bound.json");
  run.write_manifest(dir / "manifest.json");
  std::cout << "bound " << num(rep.bound()) << " (empirical " << num(rep.empirical_risk) << ")\n";
  return 0;
}

struct CurveFlags {
  std::size_t m_start = 100, m_end = 1000, m_step = 100;
  double p = 2.0, q = 2.0, delta = 0.1;
};

int cmd_bound_curve(const Globals& g, const SynthFlags& s, const CurveFlags& cf, const NetFlags& nf,
                    const TrainFlags& tf, Run& run) {
  BoundCurveConfig cfg;
  cfg.data = synthetic_setup(g, s, nf, tf);
  cfg.m_start = cf.m_start;
  cfg.m_end = cf.m_end;
  cfg.m_step = cf.m_step;
  cfg.norms = NormSpec(cf.p, cf.q);
  cfg.delta = cf.delta;
  run.seeds = synthetic_seeds(g.seed);
  const auto points = run_bound_curve(cfg);
  json arr = json::array();
  for (const auto& pt : points) {
    auto j = bound_json(pt.report);
    j["bound_ge_test_risk"] = pt.bound_ge_test_risk;
    arr.push_back(std::move(j));
    std::cout << "m=" << pt.report.m << " bound=" << num(pt.report.bound())
              << " test=" << num(pt.report.test_risk.value_or(NAN)) << "\n";
  }
  const fs::path dir(g.out_dir);
  write_json(dir / "bound_curve.json", arr);
  run.output(dir / "bound_curve.json");
  run.write_manifest(dir / "manifest.json");
  return 0;
}

struct CalFlags {
  std::vector<double> etas, ds{0.1, 0.2, 0.3, 0.4}, rhos{0.25, 0.5, 1.0, 2.0};
  double z_min = -20.0, z_max = 20.0, z_step = 1e-4, tol = 2e-4, gamma = 1.0;
  std::size_t h_points = 19;
};

int cmd_calibration(const Globals& g, const CalFlags& cf, Run& run) {
  CalibrationCheckOptions o;
  o.etas = cf.etas;
  o.ds = cf.ds;
  o.rhos = cf.rhos;
  o.grid = GridOptions{cf.z_min, cf.z_max, cf.z_step};
  o.score_tol = cf.tol;
  o.gamma = cf.gamma;
  o.h_grid_points = cf.h_points;
  const auto res = run_calibration_check(o);

  json cells = json::array();
  json etas = json::array();
  for (const auto& c : res.cells) {
    if (etas.empty() || etas.back().get<double>() != c.eta) etas.push_back(c.eta);
    cells.push_back({{"eta", c.eta},
                     {"d", c.d},
                     {"rho", c.rho},
                     {"closed_form", score_json(c.closed_form)},
                     {"grid_z", c.grid.z},
                     {"grid_risk", c.grid.risk},
                     {"grid_at_edge", c.grid.at_lower_edge || c.grid.at_upper_edge},
                     {"score_gap", finite_or_tag(c.score_gap)},
                     {"score_agrees", c.score_agrees},
                     {"decision", to_string(c.closed_decision)},
                     {"bayes_decision", to_string(c.bayes)},
                     {"decision_agrees", c.decision_agrees},
                     {"minimizer_in_band", c.in_band}});
  }
  json psi = json::array();
  double worst_kink = 0.0, worst_zero = 0.0, worst_h = 0.0, min_second = INFINITY;
  for (const auto& p : res.psi) {
    worst_kink = std::max(worst_kink, p.gap_at_kink);
    worst_zero = std::max(worst_zero, p.gap_at_zero);
    worst_h = std::max(worst_h, p.max_h_gap);
    min_second = std::min(min_second, p.min_second_diff);
    psi.push_back({{"d", p.d},
                   {"rho", p.rho},
                   {"zeta", p.zeta},
                   {"psi_at_zero", p.psi_at_zero},
                   {"gap_at_zero", p.gap_at_zero},
                   {"gap_at_kink", p.gap_at_kink},
                   {"min_second_diff", p.min_second_diff},
                   {"max_h_gap", p.max_h_gap},
                   {"h_order", p.h_order},
                   {"nondecreasing", p.nondecreasing}});
  }
  json report{{"grid", {{"etas", etas}, {"ds", o.ds}, {"rhos", o.rhos}, {"z_min", cf.z_min}, {"z_max", cf.z_max},
                        {"z_step", cf.z_step}, {"score_tol", cf.tol}}},
              {"gamma", cf.gamma},
              {"gamma_verified", res.gamma_verified},
              {"cells", cells},
              {"summary", {{"cells", res.cells.size()},
                           {"score_agreements", res.score_agreements},
                           {"decision_agreements", res.decision_agreements},
                           {"band_violations", res.band_violations},
                           {"worst_score_gap", res.worst_score_gap},
                           {"worst_psi_gap_at_zero", worst_zero},
                           {"worst_psi_gap_at_kink", worst_kink},
                           {"worst_h_gap", worst_h},
                           {"min_psi_second_diff", min_second}}},
              {"psi", psi}};
  const fs::path dir(g.out_dir);
  write_json(dir / "calibration.json", report);
  run.seeds = {{"base", g.seed}};
  run.output(dir / "calibration.json");
  run.write_manifest(dir / "manifest.json");
  std::cout << res.decision_agreements << "/" << res.cells.size() << " cells match the Bayes decision; worst score gap "
            << num(res.worst_score_gap) << "\n";
  return 0;
}

int cmd_replay(const std::string& manifest_path) {
  std::ifstream in(manifest_path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + manifest_path);
  json m;
  try {
    m = json::parse(in);
  } catch (const json::exception& e) {
    throw ParseError(manifest_path + ": " + e.what());
  }
  for (const auto& [path, hash] : m.at("inputs").items()) {
    if (!fs::exists(path)) throw std::runtime_error("replay input missing: " + path);
    if (sha256_file(path) != hash.get<std::string>()) throw std::runtime_error("replay input changed: " + path);
  }
  const auto argv = m.at("argv").get<std::vector<std::string>>();
  if (argv.size() < 2 || argv[1] == "replay") throw ParseError(manifest_path + ": not a replayable manifest");
  return run(argv);
}

}  // namespace

int run(const std::vector<std::string>& argv) {
  CLI::App app{"Reject-option classifiers trained with the double sigmoid loss", "abstain"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kToolVersion);
  app.option_defaults()->always_capture_default();

  Globals g;
  GenFlags gen;
  std::string train_data, eval_model, eval_data, manifest_path;
  NetFlags net_train, net_sweep, net_noise, net_curve;
  TrainFlags tr_train, tr_eval, tr_sweep, tr_noise, tr_bound, tr_curve;
  tr_curve.epochs = 30;
  SweepFlags sweep;
  SynthFlags syn_noise, syn_curve;
  std::vector<double> rates{0.2, 0.4};
  BoundFlags bound;
  CurveFlags curve;
  CalFlags cal;

  auto* c_gen = app.add_subcommand("gen-data", "generate the synthetic sine dataset");
  add_globals(c_gen, g);
  c_gen->add_option("--n", gen.n, "number of samples (even)")->required();
  c_gen->add_option("--flip-margin", gen.flip_margin, "half-width of the noisy band");
  c_gen->add_option("--flip-prob", gen.flip_prob, "flip probability inside the band")->required();
  c_gen->add_option("--out", gen.out, "CSV path");

  auto* c_train = app.add_subcommand("train", "train a network on a CSV dataset");
  add_globals(c_train, g);
  c_train->add_option("--data", train_data, "training CSV")->required();
  add_net(c_train, net_train, "scalar");
  add_train(c_train, tr_train);

  auto* c_eval = app.add_subcommand("eval", "evaluate a saved model");
  add_globals(c_eval, g);
  c_eval->add_option("--model", eval_model)->required();
  c_eval->add_option("--data", eval_data)->required();
  add_loss(c_eval, tr_eval);

  auto* c_sweep = app.add_subcommand("sweep", "cross-validated sweep over the rejection cost");
  add_globals(c_sweep, g);
  c_sweep->add_option("--data", sweep.data)->required();
  c_sweep->add_option("--d-min", sweep.d_min);
  c_sweep->add_option("--d-max", sweep.d_max);
  c_sweep->add_option("--d-step", sweep.d_step);
  c_sweep->add_option("--folds", sweep.folds);
  c_sweep->add_option("--reps", sweep.reps);
  c_sweep->add_flag("--no-standardize", sweep.no_standardize);
  add_net(c_sweep, net_sweep, "scalar");
  add_train(c_sweep, tr_sweep);
  // --d is meaningless here; the grid flags replace it.
  c_sweep->remove_option(c_sweep->get_option("--d"));

  auto* c_noise = app.add_subcommand("noise", "label-noise robustness on synthetic data");
  add_globals(c_noise, g);
  add_synth(c_noise, syn_noise, false);
  c_noise->add_option("--rates", rates, "noise rates")->delimiter(',');
  add_net(c_noise, net_noise, "instance");
  add_train(c_noise, tr_noise);

  auto* c_bound = app.add_subcommand("bound", "generalization bound for a saved scalar-rho model");
  add_globals(c_bound, g);
  c_bound->add_option("--model", bound.model)->required();
  c_bound->add_option("--data", bound.data, "training sample")->required();
  c_bound->add_option("--test", bound.test, "held-out sample");
  add_norms(c_bound, bound.p, bound.q, bound.delta);
  c_bound->add_option("--rho-bar", bound.rho_bar, "upper bound on rho (defaults to the realized rho)");
  add_loss(c_bound, tr_bound);

  auto* c_curve = app.add_subcommand("bound-curve", "bound vs. sample size on synthetic data");
  add_globals(c_curve, g);
  add_synth(c_curve, syn_curve, true);
  c_curve->remove_option(c_curve->get_option("--n-train"));
  c_curve->add_option("--m-start", curve.m_start);
  c_curve->add_option("--m-end", curve.m_end);
  c_curve->add_option("--m-step", curve.m_step);
  add_norms(c_curve, curve.p, curve.q, curve.delta);
  add_net(c_curve, net_curve, "scalar");
  c_curve->remove_option(c_curve->get_option("--rej"));
  add_train(c_curve, tr_curve);

  auto* c_cal = app.add_subcommand("calibration-check", "closed-form minimizer vs. brute force");
  add_globals(c_cal, g);
  c_cal->add_option("--etas", cal.etas, "eta grid (default 0.05..0.95)")->delimiter(',');
  c_cal->add_option("--ds", cal.ds)->delimiter(',');
  c_cal->add_option("--rhos", cal.rhos)->delimiter(',');
  c_cal->add_option("--z-min", cal.z_min);
  c_cal->add_option("--z-max", cal.z_max);
  c_cal->add_option("--z-step", cal.z_step);
  c_cal->add_option("--tol", cal.tol, "score tolerance");
  c_cal->add_option("--gamma", cal.gamma);
  c_cal->add_option("--h-points", cal.h_points);

  auto* c_replay = app.add_subcommand("replay", "rerun a command from its manifest");
  c_replay->add_option("--manifest", manifest_path)->required();

  std::vector<const char*> cargv;
  for (const auto& a : argv) cargv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(cargv.size()), cargv.data());
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  CLI::App* sub = app.get_subcommands().front();
  Run run;
  run.command = sub->get_name();
  run.argv = argv;
  run.config = resolved_options(sub);

  try {
    if (sub != c_gen && sub != c_replay) fs::create_directories(g.out_dir);
    if (sub == c_gen) return cmd_gen_data(g, gen, run);
    if (sub == c_train) return cmd_train(g, train_data, net_train, tr_train, run);
    if (sub == c_eval) return cmd_eval(g, eval_model, eval_data, tr_eval, run);
    if (sub == c_sweep) return cmd_sweep(g, sweep, net_sweep, tr_sweep, run);
    if (sub == c_noise) return cmd_noise(g, syn_noise, rates, net_noise, tr_noise, run);
    if (sub == c_bound) return cmd_bound(g, bound, tr_bound, run);
    if (sub == c_curve) return cmd_bound_curve(g, syn_curve, curve, net_curve, tr_curve, run);
    if (sub == c_cal) return cmd_calibration(g, cal, run);
    if (sub == c_replay) return cmd_replay(manifest_path);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 2;
  } catch (const ConfigError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}

}  // namespace abstain::cli
