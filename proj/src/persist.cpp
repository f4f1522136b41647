#include "dunal/persist.hpp"

#include <charconv>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace dunal {

namespace fs = std::filesystem;

namespace {

class CsvWriter {
 public:
  template <std::size_t K>
  CsvWriter(const fs::path& file, const std::array<std::string_view, K>& columns) : file_(file), out_(file) {
    if (!out_) throw IoError("cannot write '" + file.string() + "'");
    out_ << std::setprecision(17);
    for (std::size_t i = 0; i < K; ++i) out_ << (i ? "," : "") << columns[i];
    out_ << '\n';
  }

  template <typename... Ts>
  void row(const Ts&... values) {
    bool first = true;
    ((out_ << (first ? "" : ",") << values, first = false), ...);
    out_ << '\n';
  }

  ~CsvWriter() noexcept(false) {
    out_.flush();
    if (!out_ && std::uncaught_exceptions() == 0) throw IoError("write failed for '" + file_.string() + "'");
  }

 private:
  fs::path file_;
  std::ofstream out_;
};

class CsvReader {
 public:
  template <std::size_t K>
  CsvReader(const fs::path& file, const std::array<std::string_view, K>& columns) : file_(file), in_(file) {
    if (!in_) throw IoError("cannot open '" + file.string() + "'");
    std::string header;
    std::getline(in_, header);
    std::string expected;
    for (std::size_t i = 0; i < K; ++i) expected += std::string(i ? "," : "") + std::string(columns[i]);
    if (header != expected)
      throw IoError("'" + file.string() + "': unexpected header '" + header + "', expected '" + expected + "'");
    width_ = K;
    line_ = 1;
  }

  bool next() {
    std::string text;
    while (std::getline(in_, text)) {
      ++line_;
      if (text.empty()) continue;
      cells_.clear();
      std::stringstream ss(text);
      std::string cell;
      while (std::getline(ss, cell, ',')) cells_.push_back(cell);
      if (cells_.size() != width_)
        throw IoError("'" + file_.string() + "' line " + std::to_string(line_) + ": expected " +
                      std::to_string(width_) + " fields, found " + std::to_string(cells_.size()));
      return true;
    }
    return false;
  }

  const std::string& str(std::size_t i) const { return cells_.at(i); }

  template <typename T>
  T num(std::size_t i) const {
    const std::string& c = cells_.at(i);
    T v{};
    const auto [ptr, ec] = std::from_chars(c.data(), c.data() + c.size(), v);
    if (ec != std::errc{} || ptr != c.data() + c.size())
      throw IoError("'" + file_.string() + "' line " + std::to_string(line_) + ", column " + std::to_string(i + 1) +
                    ": cannot parse '" + c + "'");
    return v;
  }

 private:
  fs::path file_;
  std::ifstream in_;
  std::size_t width_ = 0;
  std::size_t line_ = 0;
  std::vector<std::string> cells_;
};

}  // namespace

void prepare_output_dir(const fs::path& dir, bool force) {
  std::error_code ec;
  if (fs::exists(dir, ec)) {
    if (!fs::is_directory(dir)) throw UsageError("output path '" + dir.string() + "' is not a directory");
    if (!fs::is_empty(dir) && !force)
      throw UsageError("output directory '" + dir.string() + "' is not empty (use --force to overwrite)");
    return;
  }
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create '" + dir.string() + "': " + ec.message());
}

void write_runs_csv(const fs::path& file, std::span<const RunResult> runs) {
  CsvWriter w(file, kRunsColumns);
  for (const auto& r : runs)
    for (const auto& s : r.steps)
      w.row(s.run, s.seed, s.step, s.acquired, s.ok ? "ok" : "failed", s.attempts, s.test_nll, s.test_rmse, s.r_test,
            s.r_tilde_train, s.r_lure_train, s.overfitting_bias, s.mean_depth, s.wall_seconds);
}

void write_aggregate_csv(const fs::path& file, std::span<const AggregateRow> rows) {
  CsvWriter w(file, kAggregateColumns);
  for (const auto& a : rows)
    w.row(a.step, a.acquired, a.n_runs, a.n_ok, a.test_nll_mean, a.test_nll_std, a.test_rmse_mean, a.test_rmse_std,
          a.r_test_mean, a.r_test_std, a.r_lure_train_mean, a.r_lure_train_std, a.overfitting_bias_mean,
          a.overfitting_bias_std, a.mean_depth_mean, a.mean_depth_std);
}

void write_depth_posteriors_csv(const fs::path& file, std::span<const RunResult> runs) {
  CsvWriter w(file, kDepthPosteriorColumns);
  for (const auto& r : runs)
    for (const auto& s : r.steps)
      for (std::size_t d = 0; d < s.depth_probs.size(); ++d)
        w.row(s.run, s.seed, s.step, s.acquired, d, s.depth_probs[d]);
}

void write_depth_posteriors_csv(const fs::path& file, std::span<const PosteriorRecord> records) {
  CsvWriter w(file, kDepthPosteriorColumns);
  for (const auto& p : records)
    for (Index d = 0; d < p.probs.size(); ++d) w.row(p.run, p.seed, p.size_index, p.size, d, p.probs(d));
}

void write_acquisitions_csv(const fs::path& file, std::span<const RunResult> runs) {
  CsvWriter w(file, kAcquisitionColumns);
  for (const auto& r : runs)
    for (std::size_t m = 0; m < r.record.steps.size(); ++m) {
      const auto& s = r.record.steps[m];
      w.row(r.run, r.seed, m, s.pool_index, s.probability, s.query_round);
    }
}

void write_config_json(const fs::path& file, const ExperimentConfig& cfg) {
  std::ofstream out(file);
  if (!out) throw IoError("cannot write '" + file.string() + "'");
  out << config_to_json(cfg).dump(2) << '\n';
}

void persist(const ExperimentResult& result, const ExperimentConfig& cfg, const fs::path& dir, bool force) {
  prepare_output_dir(dir, force);
  write_runs_csv(dir / "runs.csv", result.runs);
  write_aggregate_csv(dir / "aggregate.csv", result.aggregate);
  write_depth_posteriors_csv(dir / "depth_posteriors.csv", std::span<const RunResult>(result.runs));
  write_acquisitions_csv(dir / "acquisitions.csv", result.runs);
  write_config_json(dir / "config.json", cfg);
}

std::vector<StepRecord> load_runs_csv(const fs::path& file) {
  CsvReader r(file, kRunsColumns);
  std::vector<StepRecord> out;
  while (r.next()) {
    StepRecord s;
    s.run = r.num<int>(0);
    s.seed = r.num<std::uint64_t>(1);
    s.step = r.num<int>(2);
    s.acquired = r.num<Index>(3);
    if (r.str(4) != "ok" && r.str(4) != "failed") throw IoError("'" + file.string() + "': bad status '" + r.str(4) + "'");
    s.ok = r.str(4) == "ok";
    s.attempts = r.num<int>(5);
    s.test_nll = r.num<double>(6);
    s.test_rmse = r.num<double>(7);
    s.r_test = r.num<double>(8);
    s.r_tilde_train = r.num<double>(9);
    s.r_lure_train = r.num<double>(10);
    s.overfitting_bias = r.num<double>(11);
    s.mean_depth = r.num<double>(12);
    s.wall_seconds = r.num<double>(13);
    out.push_back(std::move(s));
  }
  return out;
}

std::vector<AggregateRow> load_aggregate_csv(const fs::path& file) {
  CsvReader r(file, kAggregateColumns);
  std::vector<AggregateRow> out;
  while (r.next()) {
    AggregateRow a;
    a.step = r.num<int>(0);
    a.acquired = r.num<Index>(1);
    a.n_runs = r.num<int>(2);
    a.n_ok = r.num<int>(3);
    double* fields[] = {&a.test_nll_mean,         &a.test_nll_std,         &a.test_rmse_mean,    &a.test_rmse_std,
                        &a.r_test_mean,           &a.r_test_std,           &a.r_lure_train_mean, &a.r_lure_train_std,
                        &a.overfitting_bias_mean, &a.overfitting_bias_std, &a.mean_depth_mean,   &a.mean_depth_std};
    for (std::size_t i = 0; i < std::size(fields); ++i) *fields[i] = r.num<double>(4 + i);
    out.push_back(a);
  }
  return out;
}

std::vector<DepthProbabilityRow> load_depth_posteriors_csv(const fs::path& file) {
  CsvReader r(file, kDepthPosteriorColumns);
  std::vector<DepthProbabilityRow> out;
  while (r.next())
    out.push_back({r.num<int>(0), r.num<std::uint64_t>(1), r.num<int>(2), r.num<Index>(3), r.num<int>(4),
                   r.num<double>(5)});
  return out;
}

}  // namespace dunal
