#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "dunal/acquisition.hpp"
#include "dunal/core.hpp"

namespace dunal {

struct Dataset {
  std::string name;
  Matrix X;
  Matrix y;  // N x 1

  Index size() const { return X.rows(); }
  Samples samples() const { return {X, y}; }
};

// ------------------------------------------------------------ toy generators
//
// The five toy problems are reconstructions: inputs are drawn over each
// generator's interval and targets are f(x) + N(0, noise_std^2).
//
//   simple1d  501 pts  x ~ U([-3,-0.5] u [1,3]); f = 0.6 sin(2x) + 0.3x + 0.8 [x > 0]
//   izmailov  400 pts  x ~ U([-1,-0.6] u [-0.2,0.2] u [0.6,1]); f = sin(4x) + 0.5x
//   foong     100 pts  x ~ U([-2,-1.4] u [1,1.8]); f = x + sin(4x)
//   matern    400 pts  x ~ U[-3,3]; f ~ GP(0, Matern-5/2, length 1, variance 1)
//   wiggle    300 pts  x ~ N(5, 2.5^2); f = sin(pi x) + 0.2 cos(4 pi x) - 0.3x

struct ToySpec {
  std::string_view name;
  Index default_size;
  double default_noise;
};

std::span<const ToySpec> toy_generators();

/// Deterministic given `seed`. `n` and `noise_std` fall back to the
/// generator's defaults.
Dataset gen_toy(std::string_view name, std::optional<Index> n = std::nullopt,
                std::optional<double> noise_std = std::nullopt, std::uint64_t seed = 0);

// ------------------------------------------------------------------ loading

struct DelimitedOptions {
  int target_column = -1;  // negative counts from the end
  char delimiter = ',';    // ' ' splits on any run of whitespace
  std::vector<int> feature_columns;  // empty: every non-target column
};

/// Numeric table, optionally with one header row (detected when the first
/// row has a non-numeric cell).
Dataset load_delimited(const std::filesystem::path& path, const DelimitedOptions& opts = {});

// -------------------------------------------------------- split/standardise

struct Standardizer {
  RowVector feature_mean;
  RowVector feature_std;
  double target_mean = 0.0;
  double target_std = 1.0;
  std::vector<std::string> warnings;

  static Standardizer fit(const Samples& data);
  Samples apply(const Samples& data) const;
};

struct SplitRatios {
  double train = 0.8;
  double valid = 0.1;
  double test = 0.1;
};

struct DataSplit {
  Samples train;
  Samples valid;
  Samples test;
  Standardizer standardizer;
};

/// Seeded shuffle, then split; every split is standardised with statistics
/// of the training split. Metrics computed on the result are therefore in
/// standardised target units.
DataSplit split_standardize(const Dataset& ds, const SplitRatios& ratios, std::uint64_t seed);

/// Row subset in the given order.
Samples take_rows(const Samples& data, std::span<const Index> rows);

// ------------------------------------------------------------- active pool

/// Bookkeeping over the training split: `acquired` in acquisition order
/// (aligned with `record.steps`), `remaining` sorted ascending.
struct ActivePool {
  Index initial_size = 0;
  std::vector<Index> acquired;
  std::vector<Index> remaining;
  AcquisitionRecord record;

  void acquire(std::span<const AcquisitionStep> steps);
  Samples acquired_samples(const Samples& train) const;
  Samples remaining_samples(const Samples& train) const;
};

/// Moves `init_size` uniformly drawn points into the acquired set,
/// recording probabilities 1/(remaining) for each draw.
ActivePool init_pool(Index pool_size, Index init_size, Rng& rng);

}  // namespace dunal
