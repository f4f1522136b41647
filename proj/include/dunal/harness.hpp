#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dunal/acquisition.hpp"
#include "dunal/baselines.hpp"
#include "dunal/data.hpp"
#include "dunal/dun.hpp"
#include "dunal/risk.hpp"

namespace dunal {

enum class Method { dun, mcdo, mfvi, sgd };

std::string_view to_string(Method m);
Method parse_method(std::string_view name);

struct DatasetSpec {
  std::string kind = "toy";  // toy | file
  std::string name = "wiggle";
  std::optional<Index> size;
  std::optional<double> noise_std;
  std::uint64_t seed = 0;  // toy generation only; splits are seeded per run
  std::filesystem::path path;
  DelimitedOptions delimited;
  SplitRatios ratios;
};

struct DunSettings {
  int depth = 10;
  bool batchnorm = true;
  std::string prior = "uniform";  // uniform | decaying
  double prior_rho = 0.95;

  DepthDistribution make_prior() const;
};

struct SweepValues {
  std::vector<double> temperature{1.0, 10.0, 100.0};
  std::vector<std::string> prior{"uniform", "decaying"};
  std::vector<std::string> method{"dun", "mcdo", "mfvi", "sgd"};
  std::vector<int> depth{1, 3};
};

struct ExperimentConfig {
  std::string name = "experiment";
  DatasetSpec dataset;
  Method method = Method::dun;

  AcquisitionConfig acquisition;  // batch_size is overwritten by query_size
  Index init_train_size = 10;
  int n_queries = 20;
  int query_size = 10;

  int hidden_dim = 100;
  DunSettings dun;
  McdoConfig mcdo;
  MfviConfig mfvi;
  int sgd_depth = 3;

  OptimizerConfig optimizer;
  int iterations = 1000;
  bool validation_selection = true;
  int checkpoint_every = 10;

  int n_repeats = 40;
  std::uint64_t seed_base = 0;
  RiskLoss risk_loss = RiskLoss::nll;

  SweepValues sweep;

  void validate() const;
  /// Depth of the network trained by `method`.
  int method_depth() const;
  void set_method_depth(int depth);
};

/// Metrics after training at one acquisition step of one run. Metric fields
/// are NaN when training failed.
struct StepRecord {
  int run = 0;
  std::uint64_t seed = 0;
  int step = 0;
  Index acquired = 0;
  bool ok = true;
  int attempts = 1;
  double test_nll = 0.0;
  double test_rmse = 0.0;
  double r_test = 0.0;
  double r_tilde_train = 0.0;
  double r_lure_train = 0.0;
  double overfitting_bias = 0.0;
  double mean_depth = 0.0;  // NaN for non-DUN methods
  std::vector<double> depth_probs;
  double wall_seconds = 0.0;
};

struct RunResult {
  int run = 0;
  std::uint64_t seed = 0;
  std::vector<StepRecord> steps;
  AcquisitionRecord record;
  bool truncated = false;  // pool ran out before n_queries
  std::vector<std::string> log;
  double wall_seconds = 0.0;
};

/// Mean and population standard deviation over the runs that succeeded at
/// a step.
struct AggregateRow {
  int step = 0;
  Index acquired = 0;
  int n_runs = 0;
  int n_ok = 0;
  double test_nll_mean = 0.0, test_nll_std = 0.0;
  double test_rmse_mean = 0.0, test_rmse_std = 0.0;
  double r_test_mean = 0.0, r_test_std = 0.0;
  double r_lure_train_mean = 0.0, r_lure_train_std = 0.0;
  double overfitting_bias_mean = 0.0, overfitting_bias_std = 0.0;
  double mean_depth_mean = 0.0, mean_depth_std = 0.0;
};

struct ExperimentResult {
  std::vector<RunResult> runs;
  std::vector<AggregateRow> aggregate;
};

using ProgressFn = std::function<void(const std::string&)>;

Dataset load_dataset(const DatasetSpec& spec);

/// One active-learning run: split, initial uniform draw, then
/// train / evaluate / acquire for every query round, re-initialising the
/// model each round. Deterministic in (cfg, seed).
RunResult run_single(const ExperimentConfig& cfg, const Dataset& ds, std::uint64_t seed, int run_index = 0,
                     const ProgressFn& progress = {});

/// Repeats with seeds seed_base .. seed_base + n_repeats - 1.
ExperimentResult run_experiment(const ExperimentConfig& cfg, const Dataset& ds, const ProgressFn& progress = {});

/// Per-step aggregation; independent of the order of `steps`.
std::vector<AggregateRow> aggregate(std::span<const StepRecord> steps);
std::vector<AggregateRow> aggregate(std::span<const RunResult> runs);

enum class SweepAxis { temperature, prior, method, depth };
SweepAxis parse_sweep_axis(std::string_view name);
std::string_view to_string(SweepAxis a);

struct SweepEntry {
  std::string label;
  ExperimentConfig config;
  ExperimentResult result;
};

/// Config variants along one axis; all share seed_base for paired runs.
std::vector<std::pair<std::string, ExperimentConfig>> sweep_configs(const ExperimentConfig& cfg, SweepAxis axis);
std::vector<SweepEntry> sweep(const ExperimentConfig& cfg, const Dataset& ds, SweepAxis axis,
                              const ProgressFn& progress = {});

/// DUN depth posterior after training on nested random subsets of the
/// training split, one record per (repeat, size).
struct PosteriorRecord {
  int run = 0;
  std::uint64_t seed = 0;
  int size_index = 0;
  Index size = 0;
  Vector probs;
  double mean_depth = 0.0;
};
std::vector<PosteriorRecord> depth_posterior_study(const ExperimentConfig& cfg, const Dataset& ds,
                                                   std::vector<Index> sizes, const ProgressFn& progress = {});
/// Smallest and largest acquired-set sizes of an active-learning run.
std::vector<Index> default_posterior_sizes(const ExperimentConfig& cfg, Index train_size);

}  // namespace dunal
