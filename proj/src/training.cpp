#include "abstain/training.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>
#include <thread>

namespace abstain {

void TrainConfig::validate() const {
  loss.validate();
  if (epochs < 1) throw ConfigError("epochs must be >= 1");
  if (batch_size < 1) throw ConfigError("batch size must be >= 1");
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) throw ConfigError("dropout rate must lie in [0, 1)");
  if (!(optimizer.lr >= 0.0)) throw ConfigError("learning rate must be nonnegative");
}

TrainResult train(AbstainNetwork net, const Dataset& ds, const TrainConfig& cfg) {
  cfg.validate();
  validate(net);
  ds.validate();
  if (ds.dim != net.input_dim) {
    throw ShapeError("dataset dimension " + std::to_string(ds.dim) + " does not match network input " +
                     std::to_string(net.input_dim));
  }
  if (cfg.loss.alpha < 1.0 && !net.aux_head) throw ConfigError("alpha < 1 requires an auxiliary head");

  const Rng root(cfg.seed);
  Rng dropout_rng = root.child(0x64726F70);  // "drop"
  OptimizerState opt(cfg.optimizer);
  const std::size_t n = ds.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);

  TrainResult result;
  result.history.reserve(cfg.epochs);
  double best_loss = std::numeric_limits<double>::infinity();
  std::size_t stale = 0;

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    if (cfg.shuffle) {
      std::iota(order.begin(), order.end(), 0);
      Rng shuffle_rng = root.child(epoch);
      shuffle_rng.shuffle(order);
    }
    double loss_sum = 0.0, risk_sum = 0.0;
    std::size_t rejected = 0;
    double rho_min = std::numeric_limits<double>::infinity(), rho_max = 0.0, rho_sum = 0.0;

    std::size_t batch_index = 0;
    for (std::size_t start = 0; start < n; start += cfg.batch_size, ++batch_index) {
      const std::size_t end = std::min(n, start + cfg.batch_size);
      const double inv = 1.0 / static_cast<double>(end - start);
      ParamGrads grads = ParamGrads::zeros_like(net);
      for (std::size_t bi = start; bi < end; ++bi) {
        const auto& s = ds.samples[order[bi]];
        auto [out, trace] = forward(net, s.features, DropoutPlan{cfg.dropout_rate, &dropout_rng});
        auto sl = sample_loss(out, s.label, cfg.loss);
        if (!std::isfinite(sl.loss)) {
          throw TrainingError("non-finite loss at epoch " + std::to_string(epoch + 1) + ", batch " +
                              std::to_string(batch_index + 1) + "; parameter norm " +
                              std::to_string(parameter_norm(net)));
        }
        loss_sum += sl.loss;
        const double l01 = zero_d_one_loss(s.label * out.f, out.rho, cfg.loss.d);
        risk_sum += l01;
        if (decide(out) == Decision::Reject) ++rejected;
        rho_min = std::min(rho_min, out.rho);
        rho_max = std::max(rho_max, out.rho);
        rho_sum += out.rho;

        sl.upstream.d_f *= inv;
        sl.upstream.d_rho *= inv;
        sl.upstream.d_aux[0] *= inv;
        sl.upstream.d_aux[1] *= inv;
        backward(net, trace, sl.upstream, grads);
      }
      auto pblocks = parameter_blocks(net);
      auto gblocks = parameter_blocks(grads, net);
      opt.step(pblocks, gblocks);
    }

    const double dn = static_cast<double>(n);
    EpochStats st;
    st.epoch = epoch + 1;
    st.loss = loss_sum / dn;
    st.risk = risk_sum / dn;
    st.rejection_rate = static_cast<double>(rejected) / dn;
    st.rho_min = rho_min;
    st.rho_mean = rho_sum / dn;
    st.rho_max = rho_max;
    st.lr = opt.config.lr;
    result.history.push_back(st);

    if (cfg.schedule.kind == ScheduleKind::HalveOnPlateau) {
      if (st.loss < best_loss - cfg.schedule.min_improvement) {
        best_loss = st.loss;
        stale = 0;
      } else if (++stale >= cfg.schedule.patience) {
        opt.config.lr *= 0.5;
        stale = 0;
      }
    }
  }
  result.net = std::move(net);
  return result;
}

Metrics metrics_from_counts(std::size_t correct, std::size_t wrong, std::size_t rejected, double d) {
  Metrics m;
  m.correct = correct;
  m.wrong = wrong;
  m.rejected = rejected;
  m.n = correct + wrong + rejected;
  if (m.n == 0) return m;
  const double n = static_cast<double>(m.n);
  const std::size_t accepted = correct + wrong;
  if (accepted > 0) m.accuracy_unrejected = static_cast<double>(correct) / static_cast<double>(accepted);
  m.rejection_rate = static_cast<double>(rejected) / n;
  m.zero_d_one_risk = (static_cast<double>(wrong) + d * static_cast<double>(rejected)) / n;
  return m;
}

std::vector<Decision> decisions(const AbstainNetwork& net, const Dataset& ds) {
  std::vector<Decision> out;
  out.reserve(ds.size());
  for (const auto& s : ds.samples) out.push_back(decide(predict(net, s.features)));
  return out;
}

Metrics evaluate(const AbstainNetwork& net, const Dataset& ds, double d) {
  if (ds.dim != net.input_dim) throw ShapeError("dataset dimension does not match the network");
  std::size_t correct = 0, wrong = 0, rejected = 0;
  for (const auto& s : ds.samples) {
    switch (decide(predict(net, s.features))) {
      case Decision::Reject: ++rejected; break;
      case Decision::Pos: (s.label > 0 ? correct : wrong) += 1; break;
      case Decision::Neg: (s.label < 0 ? correct : wrong) += 1; break;
    }
  }
  return metrics_from_counts(correct, wrong, rejected, d);
}

MeanStd mean_std(const std::vector<double>& v) {
  MeanStd r;
  r.count = v.size();
  if (v.empty()) return r;
  r.mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  if (v.size() > 1) {
    double ss = 0.0;
    for (double x : v) ss += (x - r.mean) * (x - r.mean);
    r.std = std::sqrt(ss / static_cast<double>(v.size() - 1));
  }
  return r;
}

std::uint64_t cell_seed(std::uint64_t base, std::size_t rep, std::size_t fold, std::size_t d_index) {
  return derive_seed(base, {rep, fold, d_index});
}

std::vector<double> arithmetic_grid(double lo, double hi, double step) {
  if (!(step > 0.0) || !(hi >= lo)) throw ConfigError("invalid grid bounds");
  std::vector<double> out;
  for (std::size_t i = 0;; ++i) {
    const double v = lo + static_cast<double>(i) * step;
    if (v > hi + 1e-9) break;
    // Round to 12 decimals so 0.05 + 2 * 0.05 prints as 0.15.
    out.push_back(std::round(v * 1e12) / 1e12);
  }
  return out;
}

std::vector<SweepRow> sweep_d(const Dataset& ds, const std::vector<double>& d_values, const SweepConfig& cfg) {
  if (d_values.empty()) throw ConfigError("sweep needs at least one value of d");
  ds.validate();
  const auto folds = kfold(ds.size(), cfg.cv);

  // Standardized splits are shared by every d.
  struct Split {
    Dataset train, validation;
  };
  std::vector<Split> splits;
  splits.reserve(folds.size());
  for (const auto& f : folds) {
    Split s{ds.subset(f.train), ds.subset(f.validation)};
    if (cfg.standardize) {
      auto st = standardize(s.train, {s.validation});
      s.train = std::move(st.train);
      s.validation = std::move(st.others[0]);
    }
    splits.push_back(std::move(s));
  }

  const std::size_t cells_per_d = folds.size();
  const std::size_t total = cells_per_d * d_values.size();
  std::vector<Metrics> results(total);
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::atomic<bool> failed{false};

  auto worker = [&] {
    while (!failed.load()) {
      const std::size_t idx = next.fetch_add(1);
      if (idx >= total) return;
      const std::size_t di = idx / cells_per_d;
      const std::size_t fi = idx % cells_per_d;
      try {
        const auto& fold = folds[fi];
        const std::uint64_t seed = cell_seed(cfg.train.seed, fold.rep, fold.fold, di);
        NetworkSpec spec = cfg.network;
        spec.input_dim = ds.dim;
        TrainConfig tc = cfg.train;
        tc.loss.d = d_values[di];
        tc.seed = derive_seed(seed, {1});
        auto trained = train(init_network(spec, derive_seed(seed, {0})), splits[fi].train, tc);
        results[idx] = evaluate(trained.net, splits[fi].validation, d_values[di]);
      } catch (...) {
        if (!failed.exchange(true)) failure = std::current_exception();
        return;
      }
    }
  };

  const std::size_t jobs = std::max<std::size_t>(1, std::min(cfg.jobs, total));
  if (jobs == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t j = 0; j < jobs; ++j) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (failure) std::rethrow_exception(failure);

  std::vector<SweepRow> rows;
  for (std::size_t di = 0; di < d_values.size(); ++di) {
    std::vector<double> acc, rej, risk;
    for (std::size_t fi = 0; fi < cells_per_d; ++fi) {
      const auto& m = results[di * cells_per_d + fi];
      if (m.accuracy_unrejected) acc.push_back(*m.accuracy_unrejected);
      rej.push_back(m.rejection_rate);
      risk.push_back(m.zero_d_one_risk);
    }
    rows.push_back({d_values[di], mean_std(acc), mean_std(rej), mean_std(risk), cells_per_d});
  }
  return rows;
}

}  // namespace abstain
