#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "abstain/nn.hpp"

namespace abstain {

struct ParseError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Sample {
  std::vector<double> features;
  int label = 1;  // +1 or -1
};

struct Dataset {
  std::vector<Sample> samples;
  std::size_t dim = 0;

  std::size_t size() const { return samples.size(); }
  bool empty() const { return samples.empty(); }

  /// Throws ConfigError unless nonempty, rectangular, finite and +-1 labelled.
  void validate() const;
  Dataset subset(const std::vector<std::size_t>& idx) const;
};

// ---------------------------------------------------------------------------
// Synthetic sine-boundary data

/// x2 - x1 - 2 sin(x1); the sign gives the clean label (0 counts as +1).
double sine_boundary(double x1, double x2);

struct SyntheticMeta {
  std::uint64_t seed = 0;
  std::size_t n = 0;
  double flip_margin = 0.0;
  double flip_prob = 0.0;
  std::size_t pos_count = 0;  // clean labels
  std::size_t neg_count = 0;
  std::size_t flips = 0;
  std::size_t in_band = 0;
};

struct SyntheticData {
  Dataset data;
  std::vector<int> clean_labels;
  std::vector<bool> in_band;  // |boundary value| <= flip_margin
  SyntheticMeta meta;
};

/// n points uniform in [-1.5, 1.5]^2, class-balanced on clean labels by
/// per-class rejection, then labels inside the band |g| <= flip_margin
/// flipped independently with probability flip_prob. Requires even n.
///
/// Stream 0 of the seed draws points; stream 1 draws one uniform per
/// in-band sample, in sample order, for the flips.
SyntheticData generate_sine_dataset(std::size_t n, double flip_margin, double flip_prob, std::uint64_t seed);

struct NoisyData {
  Dataset data;
  std::vector<bool> flipped;
  std::size_t flips = 0;
};

/// Flips each label independently with probability rate (one uniform per
/// sample, in order, from stream 2 of the seed).
NoisyData inject_uniform_noise(const Dataset& ds, double rate, std::uint64_t seed);

// ---------------------------------------------------------------------------
// CSV

struct CsvSchema {
  bool label_last = true;
  /// Raw label token -> +-1. Empty means automatic: {0,1} and {-1,1} map
  /// numerically; any other pair of tokens maps the lexicographically
  /// smaller one to -1 and the larger to +1.
  std::map<std::string, int> label_map;
};

/// Comma-separated; an optional header is detected by a non-numeric feature
/// field in the first row. Errors name the 1-based line number.
Dataset load_csv(const std::filesystem::path& path, const CsvSchema& schema = {});
Dataset parse_csv(const std::string& text, const CsvSchema& schema = {});

/// Writes x1..xD,label with a header row and 17 significant digits.
void write_csv(const std::filesystem::path& path, const Dataset& ds);

// ---------------------------------------------------------------------------
// Preprocessing and splitting

struct Standardizer {
  std::vector<double> means;
  std::vector<double> stds;  // 0 marks a constant feature, passed through

  static Standardizer fit(const Dataset& train);
  Dataset apply(const Dataset& ds) const;
};

struct StandardizeResult {
  Dataset train;
  std::vector<Dataset> others;
  Standardizer stats;
};

StandardizeResult standardize(const Dataset& train, const std::vector<Dataset>& others = {});

struct SplitPlan {
  std::size_t k = 10;
  std::size_t reps = 1;
  std::uint64_t seed = 0;
};

struct Fold {
  std::size_t rep = 0;
  std::size_t fold = 0;
  std::vector<std::size_t> train;
  std::vector<std::size_t> validation;
};

/// Per repetition r, the indices 0..n-1 are shuffled with stream r of the
/// seed and cut into k contiguous folds; the first n % k folds get one extra
/// element. Folds come back ordered by (rep, fold).
std::vector<Fold> kfold(std::size_t n, const SplitPlan& plan);

}  // namespace abstain
