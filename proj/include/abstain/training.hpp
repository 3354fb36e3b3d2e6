#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <vector>

#include "abstain/data.hpp"
#include "abstain/losses.hpp"
#include "abstain/nn.hpp"

namespace abstain {

struct TrainingError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class ScheduleKind { Constant, HalveOnPlateau };

struct LrSchedule {
  ScheduleKind kind = ScheduleKind::Constant;
  std::size_t patience = 5;
  double min_improvement = 1e-4;
};

struct TrainConfig {
  LossConfig loss;
  std::size_t epochs = 100;
  std::size_t batch_size = 32;
  OptimizerConfig optimizer;
  LrSchedule schedule;
  double dropout_rate = 0.0;  // on body outputs, training only
  std::uint64_t seed = 0;
  bool shuffle = true;

  void validate() const;
};

struct EpochStats {
  std::size_t epoch = 0;
  double loss = 0.0;  // mean training objective over the epoch
  double risk = 0.0;  // mean 0-d-1 loss of the outputs seen while training
  double rejection_rate = 0.0;
  double rho_min = 0.0;
  double rho_mean = 0.0;
  double rho_max = 0.0;
  double lr = 0.0;
};

using TrainHistory = std::vector<EpochStats>;

struct TrainResult {
  AbstainNetwork net;
  TrainHistory history;
};

/// Mini-batch training. Each epoch shuffles with stream `epoch` of
/// cfg.seed, averages sample gradients over each batch (a short final batch
/// is averaged over its true size) and takes one optimizer step per batch.
/// Throws TrainingError on a non-finite loss.
TrainResult train(AbstainNetwork net, const Dataset& ds, const TrainConfig& cfg);

struct Metrics {
  std::optional<double> accuracy_unrejected;  // undefined when everything is rejected
  double rejection_rate = 0.0;
  double zero_d_one_risk = 0.0;
  std::size_t n = 0;
  std::size_t correct = 0;
  std::size_t wrong = 0;
  std::size_t rejected = 0;
};

/// Counts decisions and derives the summary rates from the counts.
Metrics metrics_from_counts(std::size_t correct, std::size_t wrong, std::size_t rejected, double d);

Metrics evaluate(const AbstainNetwork& net, const Dataset& ds, double d);

/// Per-sample decisions, in dataset order.
std::vector<Decision> decisions(const AbstainNetwork& net, const Dataset& ds);

struct SweepConfig {
  NetworkSpec network;  // input_dim is taken from the data
  TrainConfig train;    // loss.d is overwritten per grid point
  SplitPlan cv;
  bool standardize = true;
  std::size_t jobs = 1;
};

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;
  std::size_t count = 0;
};

struct SweepRow {
  double d = 0.0;
  MeanStd accuracy;  // over cells with at least one accepted sample
  MeanStd rejection;
  MeanStd risk;
  std::size_t cells = 0;
};

MeanStd mean_std(const std::vector<double>& v);

/// Seed for one (rep, fold, d-index) cell; identical in serial and parallel runs.
std::uint64_t cell_seed(std::uint64_t base, std::size_t rep, std::size_t fold, std::size_t d_index);

/// Cross-validated sweep over the rejection cost. Every (rep, fold, d) cell
/// trains a fresh network on the training folds and is scored on the
/// held-out fold; rows aggregate over all rep x fold cells.
std::vector<SweepRow> sweep_d(const Dataset& ds, const std::vector<double>& d_values, const SweepConfig& cfg);

/// Inclusive arithmetic grid lo, lo + step, ... <= hi (+1e-9 slack).
std::vector<double> arithmetic_grid(double lo, double hi, double step);

}  // namespace abstain
