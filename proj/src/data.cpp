#include "dunal/data.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numbers>
#include <numeric>
#include <sstream>

namespace dunal {

namespace {

constexpr std::array<ToySpec, 5> kToys{{
    {"simple1d", 501, 0.1},
    {"izmailov", 400, 0.1},
    {"foong", 100, 0.1},
    {"matern", 400, 0.1},
    {"wiggle", 300, 0.25},
}};

// Uniform draw over a union of equal-probability-per-length intervals.
double draw_union(std::span<const std::pair<double, double>> parts, Rng& rng) {
  double total = 0.0;
  for (auto [a, b] : parts) total += b - a;
  std::uniform_real_distribution<double> u(0.0, total);
  double t = u(rng);
  for (auto [a, b] : parts) {
    if (t <= b - a) return a + t;
    t -= b - a;
  }
  return parts.back().second;
}

double matern52(double r) {
  const double s = std::sqrt(5.0) * std::abs(r);
  return (1.0 + s + s * s / 3.0) * std::exp(-s);
}

Vector matern_draw(const Vector& x, Rng& rng) {
  const Index n = x.size();
  Matrix K(n, n);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < n; ++j) K(i, j) = matern52(x(i) - x(j));
  K.diagonal().array() += 1e-8;
  Eigen::LLT<Matrix> llt(K);
  if (llt.info() != Eigen::Success) throw NumericError("gen_toy(matern): covariance not positive definite");
  std::normal_distribution<double> nd;
  Vector z(n);
  for (Index i = 0; i < n; ++i) z(i) = nd(rng);
  return llt.matrixL() * z;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> split_line(std::string_view line, char delim) {
  std::vector<std::string_view> cells;
  if (delim == ' ') {
    std::size_t i = 0;
    while (i < line.size()) {
      while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
      std::size_t j = i;
      while (j < line.size() && !std::isspace(static_cast<unsigned char>(line[j]))) ++j;
      if (j > i) cells.push_back(line.substr(i, j - i));
      i = j;
    }
    return cells;
  }
  std::size_t start = 0;
  for (;;) {
    const std::size_t pos = line.find(delim, start);
    cells.push_back(trim(line.substr(start, pos == std::string_view::npos ? pos : pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return cells;
}

bool parse_number(std::string_view cell, double& out) {
  if (cell.empty()) return false;
  if (cell.front() == '+') cell.remove_prefix(1);
  const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), out);
  return ec == std::errc() && ptr == cell.data() + cell.size() && std::isfinite(out);
}

}  // namespace

std::span<const ToySpec> toy_generators() { return kToys; }

Dataset gen_toy(std::string_view name, std::optional<Index> n, std::optional<double> noise_std,
                std::uint64_t seed) {
  const auto it = std::find_if(kToys.begin(), kToys.end(), [&](const ToySpec& t) { return t.name == name; });
  if (it == kToys.end()) throw ConfigError("gen_toy: unknown generator '" + std::string(name) + "'");
  const Index count = n.value_or(it->default_size);
  const double noise = noise_std.value_or(it->default_noise);
  if (count < 1) throw ConfigError("gen_toy: n must be >= 1");
  if (!(noise >= 0.0)) throw ConfigError("gen_toy: noise_std must be >= 0");

  Rng rng(seed);
  Vector x(count);
  Vector f(count);
  using Parts = std::vector<std::pair<double, double>>;
  auto fill_x = [&](const Parts& parts) {
    for (Index i = 0; i < count; ++i) x(i) = draw_union(parts, rng);
  };
  if (name == "simple1d") {
    fill_x({{-3.0, -0.5}, {1.0, 3.0}});
    f = (0.6 * (2.0 * x.array()).sin() + 0.3 * x.array() + 0.8 * (x.array() > 0.0).cast<double>()).matrix();
  } else if (name == "izmailov") {
    fill_x({{-1.0, -0.6}, {-0.2, 0.2}, {0.6, 1.0}});
    f = ((4.0 * x.array()).sin() + 0.5 * x.array()).matrix();
  } else if (name == "foong") {
    fill_x({{-2.0, -1.4}, {1.0, 1.8}});
    f = (x.array() + (4.0 * x.array()).sin()).matrix();
  } else if (name == "matern") {
    fill_x({{-3.0, 3.0}});
    f = matern_draw(x, rng);
  } else {  // wiggle
    std::normal_distribution<double> xd(5.0, 2.5);
    for (Index i = 0; i < count; ++i) x(i) = xd(rng);
    const double pi = std::numbers::pi;
    f = ((pi * x.array()).sin() + 0.2 * (4.0 * pi * x.array()).cos() - 0.3 * x.array()).matrix();
  }

  Dataset ds;
  ds.name = std::string(name);
  ds.X = x;
  ds.y = f;
  std::normal_distribution<double> eps(0.0, 1.0);
  if (noise > 0.0)
    for (Index i = 0; i < count; ++i) ds.y(i, 0) += noise * eps(rng);
  return ds;
}

Dataset load_delimited(const std::filesystem::path& path, const DelimitedOptions& opts) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path.string() + "'");

  std::vector<std::vector<double>> rows;
  std::string line;
  std::size_t line_no = 0;
  std::size_t width = 0;
  bool header_seen = false;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string_view content = trim(line);
    if (content.empty()) continue;
    const auto cells = split_line(content, opts.delimiter);
    std::vector<double> values(cells.size());
    std::size_t bad = cells.size();
    for (std::size_t c = 0; c < cells.size(); ++c)
      if (!parse_number(cells[c], values[c])) {
        bad = c;
        break;
      }
    if (bad != cells.size()) {
      if (rows.empty() && !header_seen) {
        header_seen = true;
        width = cells.size();
        continue;
      }
      throw IoError(path.string() + ": line " + std::to_string(line_no) + ", column " + std::to_string(bad + 1) +
                    ": non-numeric cell '" + std::string(cells[bad]) + "'");
    }
    if (width == 0) width = cells.size();
    if (cells.size() != width)
      throw IoError(path.string() + ": line " + std::to_string(line_no) + " has " + std::to_string(cells.size()) +
                    " columns, expected " + std::to_string(width));
    rows.push_back(std::move(values));
  }
  if (rows.empty()) throw IoError(path.string() + ": no data rows");
  if (width < 2) throw IoError(path.string() + ": need at least one feature and one target column");

  const int w = static_cast<int>(width);
  const int target = opts.target_column < 0 ? w + opts.target_column : opts.target_column;
  if (target < 0 || target >= w)
    throw ConfigError("load_delimited: target column " + std::to_string(opts.target_column) + " out of range for " +
                      std::to_string(w) + " columns");

  std::vector<int> features = opts.feature_columns;
  if (features.empty()) {
    for (int c = 0; c < w; ++c)
      if (c != target) features.push_back(c);
  }
  for (int& c : features) {
    const int resolved = c < 0 ? w + c : c;
    if (resolved < 0 || resolved >= w || resolved == target)
      throw ConfigError("load_delimited: feature column " + std::to_string(c) + " is out of range or the target");
    c = resolved;
  }

  Dataset ds;
  ds.name = path.stem().string();
  const auto n = static_cast<Index>(rows.size());
  ds.X.resize(n, static_cast<Index>(features.size()));
  ds.y.resize(n, 1);
  for (Index r = 0; r < n; ++r) {
    const auto& row = rows[static_cast<std::size_t>(r)];
    ds.y(r, 0) = row[static_cast<std::size_t>(target)];
    for (std::size_t j = 0; j < features.size(); ++j)
      ds.X(r, static_cast<Index>(j)) = row[static_cast<std::size_t>(features[j])];
  }
  return ds;
}

Standardizer Standardizer::fit(const Samples& data) {
  if (data.empty()) throw UsageError("standardizer: empty data");
  Standardizer s;
  const double n = static_cast<double>(data.size());
  s.feature_mean = data.X.colwise().mean();
  s.feature_std = ((data.X.rowwise() - s.feature_mean).cwiseAbs2().colwise().sum() / n).cwiseSqrt();
  for (Index j = 0; j < s.feature_std.size(); ++j)
    if (!(s.feature_std(j) > 1e-12 * std::max(1.0, std::abs(s.feature_mean(j))))) {
      s.feature_std(j) = 1.0;
      s.warnings.push_back("feature column " + std::to_string(j) + " is constant on the training split; std set to 1");
    }
  s.target_mean = data.y.mean();
  s.target_std = std::sqrt((data.y.array() - s.target_mean).square().sum() / n);
  if (!(s.target_std > 1e-12 * std::max(1.0, std::abs(s.target_mean)))) {
    s.target_std = 1.0;
    s.warnings.push_back("target is constant on the training split; std set to 1");
  }
  return s;
}

Samples Standardizer::apply(const Samples& data) const {
  if (data.X.cols() != feature_mean.size()) throw ShapeError("standardizer: feature count mismatch");
  Samples out;
  out.X = ((data.X.rowwise() - feature_mean).array().rowwise() / feature_std.array()).matrix();
  out.y = ((data.y.array() - target_mean) / target_std).matrix();
  return out;
}

Samples take_rows(const Samples& data, std::span<const Index> rows) {
  Samples out{Matrix(static_cast<Index>(rows.size()), data.X.cols()),
              Matrix(static_cast<Index>(rows.size()), data.y.cols())};
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const Index r = rows[i];
    if (r < 0 || r >= data.size()) throw UsageError("take_rows: row index out of range");
    out.X.row(static_cast<Index>(i)) = data.X.row(r);
    out.y.row(static_cast<Index>(i)) = data.y.row(r);
  }
  return out;
}

DataSplit split_standardize(const Dataset& ds, const SplitRatios& ratios, std::uint64_t seed) {
  for (double r : {ratios.train, ratios.valid, ratios.test})
    if (!(r >= 0.0)) throw ConfigError("split ratios must be nonnegative");
  if (std::abs(ratios.train + ratios.valid + ratios.test - 1.0) > 1e-9)
    throw ConfigError("split ratios must sum to 1");
  if (ds.y.rows() != ds.X.rows() || ds.y.cols() != 1) throw ShapeError("split: X/y shape mismatch");

  const Index n = ds.size();
  const auto n_train = static_cast<Index>(std::llround(ratios.train * static_cast<double>(n)));
  const auto n_valid = static_cast<Index>(std::llround(ratios.valid * static_cast<double>(n)));
  if (n_train < 1 || n_train + n_valid > n) throw ConfigError("split: dataset too small for the ratios");

  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});
  Rng rng(seed);
  std::shuffle(order.begin(), order.end(), rng);

  const Samples all = ds.samples();
  const std::span<const Index> idx(order);
  const Samples train = take_rows(all, idx.subspan(0, static_cast<std::size_t>(n_train)));
  const Samples valid = take_rows(all, idx.subspan(static_cast<std::size_t>(n_train), static_cast<std::size_t>(n_valid)));
  const Samples test = take_rows(all, idx.subspan(static_cast<std::size_t>(n_train + n_valid)));

  DataSplit out;
  out.standardizer = Standardizer::fit(train);
  out.train = out.standardizer.apply(train);
  out.valid = out.standardizer.apply(valid);
  out.test = out.standardizer.apply(test);
  return out;
}

void ActivePool::acquire(std::span<const AcquisitionStep> steps) {
  for (const auto& s : steps) {
    const auto it = std::lower_bound(remaining.begin(), remaining.end(), s.pool_index);
    if (it == remaining.end() || *it != s.pool_index)
      throw UsageError("active pool: index " + std::to_string(s.pool_index) + " is not in the pool");
    remaining.erase(it);
    acquired.push_back(s.pool_index);
    record.steps.push_back(s);
  }
}

Samples ActivePool::acquired_samples(const Samples& train) const { return take_rows(train, acquired); }

Samples ActivePool::remaining_samples(const Samples& train) const { return take_rows(train, remaining); }

ActivePool init_pool(Index pool_size, Index init_size, Rng& rng) {
  if (init_size < 1 || init_size > pool_size)
    throw ConfigError("init_pool: init size " + std::to_string(init_size) + " must lie in [1, " +
                      std::to_string(pool_size) + "]");
  ActivePool pool;
  pool.initial_size = pool_size;
  pool.remaining.resize(static_cast<std::size_t>(pool_size));
  std::iota(pool.remaining.begin(), pool.remaining.end(), Index{0});
  AcquisitionConfig cfg;
  cfg.strategy = AcquisitionStrategy::random;
  cfg.batch_size = static_cast<int>(init_size);
  const auto steps =
      stochastic_batch_acquire(Vector::Zero(pool_size), pool.remaining, cfg, rng, /*query_round=*/0);
  pool.acquire(steps);
  return pool;
}

}  // namespace dunal
