#pragma once

#include <functional>
#include <string_view>

#include "dunal/acquisition.hpp"
#include "dunal/core.hpp"
#include "dunal/mixture.hpp"

namespace dunal {

/// Arithmetic mean of per-point losses.
double empirical_risk(const Vector& losses);

/// Importance weight v_m for the m-th acquired point (1-based) out of M,
/// drawn from an initial pool of N with proposal probability alpha.
/// The m = M = N case, where the formula reads 0/0, is defined as 1.
double lure_weight(Index m, Index M, Index N, double alpha);

/// Levelled unbiased estimate of the pool risk from the losses of the
/// acquired points, in acquisition order, and their recorded probabilities.
double r_lure(const Vector& losses, const AcquisitionRecord& record, Index pool_size);

enum class RiskLoss { nll, squared };

std::string_view to_string(RiskLoss loss);
RiskLoss parse_risk_loss(std::string_view name);

/// Per-point loss of a predictive against targets.
Vector predictive_losses(const GaussianMixturePredictive& pred, const Matrix& y, RiskLoss loss);

struct RiskReport {
  double r_test = 0.0;
  double r_tilde_train = 0.0;
  double r_lure_train = 0.0;
  double overfitting_bias = 0.0;  // r_test - r_lure_train
  Index M = 0;
  Index N_pool_initial = 0;
};

using PredictiveFn = std::function<GaussianMixturePredictive(const Matrix&)>;

/// Overfitting bias of a model trained on exactly the acquired points:
/// test risk minus the LURE estimate of the training risk. `train` rows are
/// the acquired points in the order of `record.steps`.
RiskReport overfitting_bias(const PredictiveFn& predict, const AcquisitionRecord& record, const Samples& train,
                            const Samples& test, Index pool_size, RiskLoss loss = RiskLoss::nll);

}  // namespace dunal
