#include "dunal/risk.hpp"

#include <cmath>
#include <string>

namespace dunal {

double empirical_risk(const Vector& losses) {
  if (losses.size() == 0) throw UsageError("empirical_risk: no losses");
  return losses.mean();
}

double lure_weight(Index m, Index M, Index N, double alpha) {
  if (!(alpha > 0.0) || alpha > 1.0 + 1e-12)
    throw UsageError("lure_weight: alpha must lie in (0, 1], got " + std::to_string(alpha));
  if (m < 1 || m > M || M > N) throw UsageError("lure_weight: need 1 <= m <= M <= N");
  if (m == N) return 1.0;
  const double n = static_cast<double>(N);
  const double mm = static_cast<double>(m);
  return 1.0 + (n - static_cast<double>(M)) / (n - mm) * (1.0 / ((n - mm + 1.0) * alpha) - 1.0);
}

double r_lure(const Vector& losses, const AcquisitionRecord& record, Index pool_size) {
  const Index M = losses.size();
  if (M == 0) throw UsageError("r_lure: no losses");
  if (record.size() != M)
    throw UsageError("r_lure: " + std::to_string(M) + " losses but " + std::to_string(record.size()) +
                     " acquisition steps");
  double total = 0.0;
  for (Index m = 0; m < M; ++m)
    total += lure_weight(m + 1, M, pool_size, record.steps[static_cast<std::size_t>(m)].probability) * losses(m);
  return total / static_cast<double>(M);
}

std::string_view to_string(RiskLoss loss) { return loss == RiskLoss::nll ? "nll" : "squared"; }

RiskLoss parse_risk_loss(std::string_view name) {
  if (name == "nll") return RiskLoss::nll;
  if (name == "squared") return RiskLoss::squared;
  throw ConfigError("unknown risk loss '" + std::string(name) + "'");
}

Vector predictive_losses(const GaussianMixturePredictive& pred, const Matrix& y, RiskLoss loss) {
  if (loss == RiskLoss::nll) return mixture_point_nll(pred, y);
  pred.validate();
  if (y.rows() != pred.points() || y.cols() != 1) throw ShapeError("predictive_losses: target shape mismatch");
  return (pred.mean() - y.col(0)).cwiseAbs2();
}

RiskReport overfitting_bias(const PredictiveFn& predict, const AcquisitionRecord& record, const Samples& train,
                            const Samples& test, Index pool_size, RiskLoss loss) {
  if (record.size() != train.size())
    throw UsageError("overfitting_bias: record has " + std::to_string(record.size()) + " steps for " +
                     std::to_string(train.size()) + " training points");
  if (test.empty()) throw UsageError("overfitting_bias: empty test set");
  const Vector train_losses = predictive_losses(predict(train.X), train.y, loss);
  RiskReport r;
  r.r_test = empirical_risk(predictive_losses(predict(test.X), test.y, loss));
  r.r_tilde_train = empirical_risk(train_losses);
  r.r_lure_train = r_lure(train_losses, record, pool_size);
  r.overfitting_bias = r.r_test - r.r_lure_train;
  r.M = train.size();
  r.N_pool_initial = pool_size;
  return r;
}

}  // namespace dunal
