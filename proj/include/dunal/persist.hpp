#pragma once

#include <array>
#include <filesystem>
#include <span>
#include <string_view>
#include <vector>

#include "dunal/config.hpp"
#include "dunal/harness.hpp"

namespace dunal {

// Output directory layout written by `persist`:
//
//   runs.csv             one row per (run, step)
//   aggregate.csv        one row per step, mean/std over successful runs
//   depth_posteriors.csv one row per (run, step, depth); DUN only
//   acquisitions.csv     one row per acquired point, in acquisition order
//   config.json          the resolved configuration
//
// Numbers are written with 17 significant digits; missing values are "nan".
// `status` is "ok" or "failed". wall_time_s is the only nondeterministic
// column.

inline constexpr std::array<std::string_view, 14> kRunsColumns{
    "run",          "seed",          "step",         "acquired",         "status",
    "attempts",     "test_nll",      "test_rmse",    "r_test",           "r_tilde_train",
    "r_lure_train", "overfitting_bias", "mean_depth", "wall_time_s"};

inline constexpr std::array<std::string_view, 16> kAggregateColumns{
    "step",          "acquired",         "n_runs",           "n_ok",
    "test_nll_mean", "test_nll_std",     "test_rmse_mean",   "test_rmse_std",
    "r_test_mean",   "r_test_std",       "r_lure_train_mean", "r_lure_train_std",
    "overfitting_bias_mean", "overfitting_bias_std", "mean_depth_mean", "mean_depth_std"};

inline constexpr std::array<std::string_view, 6> kDepthPosteriorColumns{"run",   "seed",  "step",
                                                                        "acquired", "depth", "probability"};

inline constexpr std::array<std::string_view, 6> kAcquisitionColumns{"run",        "seed",        "order",
                                                                     "pool_index", "probability", "query_round"};

/// Creates `dir` if needed. A non-empty existing directory is an error
/// unless `force` is set.
void prepare_output_dir(const std::filesystem::path& dir, bool force);

void write_runs_csv(const std::filesystem::path& file, std::span<const RunResult> runs);
void write_aggregate_csv(const std::filesystem::path& file, std::span<const AggregateRow> rows);
void write_depth_posteriors_csv(const std::filesystem::path& file, std::span<const RunResult> runs);
/// Posterior-study variant: `step` holds the size index, `acquired` the size.
void write_depth_posteriors_csv(const std::filesystem::path& file, std::span<const PosteriorRecord> records);
void write_acquisitions_csv(const std::filesystem::path& file, std::span<const RunResult> runs);
void write_config_json(const std::filesystem::path& file, const ExperimentConfig& cfg);

/// All five files into `dir`.
void persist(const ExperimentResult& result, const ExperimentConfig& cfg, const std::filesystem::path& dir,
             bool force);

struct DepthProbabilityRow {
  int run = 0;
  std::uint64_t seed = 0;
  int step = 0;
  Index acquired = 0;
  int depth = 0;
  double probability = 0.0;
};

/// Loaders check the header against the documented columns. Loaded step
/// records carry no depth probabilities.
std::vector<StepRecord> load_runs_csv(const std::filesystem::path& file);
std::vector<AggregateRow> load_aggregate_csv(const std::filesystem::path& file);
std::vector<DepthProbabilityRow> load_depth_posteriors_csv(const std::filesystem::path& file);

}  // namespace dunal
