#include "abstain/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include "abstain/nn.hpp"
#include "abstain/rng.hpp"

namespace abstain {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

std::optional<double> parse_double(std::string_view s) {
  s = trim(s);
  if (s.empty()) return std::nullopt;
  if (s.front() == '+') s.remove_prefix(1);
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(v)) return std::nullopt;
  return v;
}

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(',', start);
    out.push_back(trim(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

std::map<std::string, int> auto_label_map(const std::set<std::string>& tokens) {
  std::set<double> numeric;
  bool all_numeric = true;
  for (const auto& t : tokens) {
    if (auto v = parse_double(t)) numeric.insert(*v); else all_numeric = false;
  }
  std::map<std::string, int> m;
  if (all_numeric) {
    const bool zero_one = std::all_of(numeric.begin(), numeric.end(), [](double v) { return v == 0.0 || v == 1.0; });
    const bool pm_one = std::all_of(numeric.begin(), numeric.end(), [](double v) { return v == -1.0 || v == 1.0; });
    if (zero_one || pm_one) {
      for (const auto& t : tokens) m[t] = *parse_double(t) > 0.0 ? 1 : -1;
      return m;
    }
  }
  if (tokens.size() > 2) throw ParseError("labels take more than two distinct values");
  int sign = -1;
  for (const auto& t : tokens) {
    m[t] = sign;
    sign = 1;
  }
  return m;
}

}  // namespace

void Dataset::validate() const {
  if (samples.empty()) throw ConfigError("dataset is empty");
  if (dim == 0) throw ConfigError("dataset dimension must be positive");
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto& s = samples[i];
    if (s.features.size() != dim) throw ConfigError("sample " + std::to_string(i) + " has the wrong dimension");
    if (s.label != 1 && s.label != -1) throw ConfigError("sample " + std::to_string(i) + " has a label outside {-1, +1}");
    for (double v : s.features)
      if (!std::isfinite(v)) throw ConfigError("sample " + std::to_string(i) + " has a non-finite feature");
  }
}

Dataset Dataset::subset(const std::vector<std::size_t>& idx) const {
  Dataset out;
  out.dim = dim;
  out.samples.reserve(idx.size());
  for (auto i : idx) out.samples.push_back(samples.at(i));
  return out;
}

double sine_boundary(double x1, double x2) { return x2 - x1 - 2.0 * std::sin(x1); }

SyntheticData generate_sine_dataset(std::size_t n, double flip_margin, double flip_prob, std::uint64_t seed) {
  if (n == 0 || n % 2 != 0) throw ConfigError("synthetic dataset size must be a positive even number, got " + std::to_string(n));
  if (!(flip_prob >= 0.0 && flip_prob <= 1.0)) throw ConfigError("flip probability must lie in [0, 1]");
  if (!(flip_margin >= 0.0)) throw ConfigError("flip margin must be nonnegative");

  const Rng root(seed);
  Rng points = root.child(0);
  Rng flips = root.child(1);
  const std::size_t half = n / 2;

  SyntheticData out;
  out.data.dim = 2;
  out.data.samples.reserve(n);
  std::size_t pos = 0, neg = 0;
  while (pos + neg < n) {
    const double x1 = points.uniform(-1.5, 1.5);
    const double x2 = points.uniform(-1.5, 1.5);
    const int label = sine_boundary(x1, x2) >= 0.0 ? 1 : -1;
    if (label > 0 ? pos >= half : neg >= half) continue;
    (label > 0 ? pos : neg) += 1;
    out.data.samples.push_back({{x1, x2}, label});
  }

  out.meta = {seed, n, flip_margin, flip_prob, pos, neg, 0, 0};
  out.clean_labels.reserve(n);
  out.in_band.reserve(n);
  for (auto& s : out.data.samples) {
    out.clean_labels.push_back(s.label);
    const bool band = std::abs(sine_boundary(s.features[0], s.features[1])) <= flip_margin;
    out.in_band.push_back(band);
    if (!band) continue;
    ++out.meta.in_band;
    if (flips.uniform() < flip_prob) {
      s.label = -s.label;
      ++out.meta.flips;
    }
  }
  return out;
}

NoisyData inject_uniform_noise(const Dataset& ds, double rate, std::uint64_t seed) {
  if (!(rate >= 0.0 && rate <= 1.0)) throw ConfigError("noise rate must lie in [0, 1]");
  Rng rng = Rng(seed).child(2);
  NoisyData out;
  out.data = ds;
  out.flipped.assign(ds.size(), false);
  for (std::size_t i = 0; i < ds.size(); ++i) {
    if (rng.uniform() < rate) {
      out.data.samples[i].label = -out.data.samples[i].label;
      out.flipped[i] = true;
      ++out.flips;
    }
  }
  return out;
}

Dataset parse_csv(const std::string& text, const CsvSchema& schema) {
  std::vector<std::pair<std::size_t, std::string>> lines;
  {
    std::istringstream in(text);
    std::string line;
    std::size_t no = 0;
    while (std::getline(in, line)) {
      ++no;
      if (trim(line).empty()) continue;
      lines.emplace_back(no, line);
    }
  }
  if (lines.empty()) throw ParseError("CSV input is empty");

  const auto first = split_fields(lines.front().second);
  if (first.size() < 2) throw ParseError("line " + std::to_string(lines.front().first) + ": need at least one feature and a label");
  const std::size_t ncols = first.size();
  const std::size_t label_col = schema.label_last ? ncols - 1 : 0;

  bool header = false;
  for (std::size_t c = 0; c < ncols; ++c)
    if (c != label_col && !parse_double(first[c])) header = true;

  Dataset ds;
  ds.dim = ncols - 1;
  std::vector<std::string> raw_labels;
  for (std::size_t li = header ? 1 : 0; li < lines.size(); ++li) {
    const auto& [no, line] = lines[li];
    const auto fields = split_fields(line);
    if (fields.size() != ncols) {
      throw ParseError("line " + std::to_string(no) + ": expected " + std::to_string(ncols) + " fields, got " +
                       std::to_string(fields.size()));
    }
    Sample s;
    s.features.reserve(ds.dim);
    for (std::size_t c = 0; c < ncols; ++c) {
      if (c == label_col) continue;
      const auto v = parse_double(fields[c]);
      if (!v) throw ParseError("line " + std::to_string(no) + ": non-numeric feature '" + std::string(fields[c]) + "'");
      s.features.push_back(*v);
    }
    raw_labels.emplace_back(fields[label_col]);
    ds.samples.push_back(std::move(s));
  }
  if (ds.samples.empty()) throw ParseError("CSV has a header but no data rows");

  auto label_map = schema.label_map;
  if (label_map.empty()) label_map = auto_label_map({raw_labels.begin(), raw_labels.end()});
  for (std::size_t i = 0; i < raw_labels.size(); ++i) {
    auto it = label_map.find(raw_labels[i]);
    if (it == label_map.end() || (it->second != 1 && it->second != -1)) {
      throw ParseError("line " + std::to_string(lines[i + (header ? 1 : 0)].first) + ": unmappable label '" +
                       raw_labels[i] + "'");
    }
    ds.samples[i].label = it->second;
  }
  return ds;
}

Dataset load_csv(const std::filesystem::path& path, const CsvSchema& schema) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  try {
    return parse_csv(buf.str(), schema);
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

void write_csv(const std::filesystem::path& path, const Dataset& ds) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  for (std::size_t j = 0; j < ds.dim; ++j) out << 'x' << (j + 1) << ',';
  out << "label\n";
  char buf[32];
  for (const auto& s : ds.samples) {
    for (double v : s.features) {
      std::snprintf(buf, sizeof buf, "%.17g", v);
      out << buf << ',';
    }
    out << s.label << '\n';
  }
}

Standardizer Standardizer::fit(const Dataset& train) {
  if (train.empty()) throw ConfigError("cannot standardize an empty dataset");
  Standardizer st;
  const double n = static_cast<double>(train.size());
  st.means.assign(train.dim, 0.0);
  st.stds.assign(train.dim, 0.0);
  for (const auto& s : train.samples)
    for (std::size_t j = 0; j < train.dim; ++j) st.means[j] += s.features[j];
  for (auto& m : st.means) m /= n;
  for (const auto& s : train.samples)
    for (std::size_t j = 0; j < train.dim; ++j) st.stds[j] += (s.features[j] - st.means[j]) * (s.features[j] - st.means[j]);
  for (auto& v : st.stds) v = std::sqrt(v / n);
  return st;
}

Dataset Standardizer::apply(const Dataset& ds) const {
  if (ds.dim != means.size()) throw ShapeError("standardizer dimension does not match dataset");
  Dataset out = ds;
  for (auto& s : out.samples)
    for (std::size_t j = 0; j < ds.dim; ++j)
      if (stds[j] > 0.0) s.features[j] = (s.features[j] - means[j]) / stds[j];
  return out;
}

StandardizeResult standardize(const Dataset& train, const std::vector<Dataset>& others) {
  StandardizeResult r;
  r.stats = Standardizer::fit(train);
  r.train = r.stats.apply(train);
  for (const auto& o : others) r.others.push_back(r.stats.apply(o));
  return r;
}

std::vector<Fold> kfold(std::size_t n, const SplitPlan& plan) {
  if (plan.k < 2 && n > 1) throw ConfigError("k-fold needs k >= 2");
  if (plan.k == 0 || plan.k > n) throw ConfigError("k = " + std::to_string(plan.k) + " exceeds n = " + std::to_string(n));
  if (plan.reps == 0) throw ConfigError("at least one repetition is required");
  const Rng root(plan.seed);
  std::vector<Fold> out;
  out.reserve(plan.k * plan.reps);
  for (std::size_t rep = 0; rep < plan.reps; ++rep) {
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    Rng rng = root.child(rep);
    rng.shuffle(perm);
    const std::size_t base = n / plan.k, extra = n % plan.k;
    std::size_t start = 0;
    for (std::size_t f = 0; f < plan.k; ++f) {
      const std::size_t len = base + (f < extra ? 1 : 0);
      Fold fold;
      fold.rep = rep;
      fold.fold = f;
      fold.validation.assign(perm.begin() + start, perm.begin() + start + len);
      fold.train.reserve(n - len);
      fold.train.insert(fold.train.end(), perm.begin(), perm.begin() + start);
      fold.train.insert(fold.train.end(), perm.begin() + start + len, perm.end());
      out.push_back(std::move(fold));
      start += len;
    }
  }
  return out;
}

}  // namespace abstain
