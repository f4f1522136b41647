#pragma once

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace dunal {

using Index = Eigen::Index;

/// Dense row-per-sample matrix used for inputs, activations and targets.
using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;

/// Every stochastic step (init, dropout masks, MC samples, acquisition
/// draws) pulls from an engine owned by the caller.
using Rng = std::mt19937_64;

/// Inputs and single-column targets, one row per example.
struct Samples {
  Matrix X;
  Matrix y;

  Index size() const { return X.rows(); }
  bool empty() const { return X.rows() == 0; }
};

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class UsageError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised when an optimisation objective goes non-finite.
class TrainingError : public NumericError {
 public:
  TrainingError(const std::string& what, int iteration)
      : NumericError(what + " (iteration " + std::to_string(iteration) + ")"),
        iteration_(iteration) {}
  int iteration() const noexcept { return iteration_; }

 private:
  int iteration_;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace dunal
