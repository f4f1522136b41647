#pragma once

#include <cmath>
#include <string>

#include "dunal/core.hpp"
#include "dunal/logmath.hpp"

namespace dunal {

/// Per-point Gaussian mixture with globally shared component weights.
/// Column k of `means`/`variances` is component k; row n is data point n.
template <typename Scalar>
struct BasicGaussianMixture {
  using VectorType = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  using MatrixType = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

  VectorType weights;
  MatrixType means;
  MatrixType variances;

  Index components() const { return weights.size(); }
  Index points() const { return means.rows(); }

  void validate() const {
    using std::abs;
    if (weights.size() == 0) throw ShapeError("mixture: no components");
    if (means.cols() != weights.size() || variances.cols() != weights.size() ||
        variances.rows() != means.rows())
      throw ShapeError("mixture: shape mismatch");
    if ((weights.array() < Scalar(0)).any()) throw NumericError("mixture: negative weight");
    if (abs(weights.sum() - Scalar(1)) > Scalar(1e-9))
      throw NumericError("mixture: weights do not sum to 1");
    if (!(variances.array() > Scalar(0)).all())
      throw NumericError("mixture: nonpositive variance");
  }

  /// Mixture mean per point.
  VectorType mean() const { return means * weights; }

  /// Moment-matched variance per point: sum_k w_k (var_k + mean_k^2) - mean^2,
  /// accumulated as within-component plus spread so identical components
  /// give the component variance exactly.
  VectorType variance() const {
    const VectorType m = mean();
    const MatrixType centred = means.colwise() - m;
    return variances * weights + centred.cwiseAbs2() * weights;
  }

  /// Mixture of equally weighted components.
  static BasicGaussianMixture equal_weights(MatrixType means, MatrixType variances) {
    BasicGaussianMixture out;
    const Index k = means.cols();
    out.weights = VectorType::Constant(k, Scalar(1) / Scalar(k));
    out.means = std::move(means);
    out.variances = std::move(variances);
    return out;
  }
};

using GaussianMixturePredictive = BasicGaussianMixture<double>;

/// Per-point negative log predictive density.
template <typename Scalar, typename Derived>
Eigen::Matrix<Scalar, Eigen::Dynamic, 1> mixture_point_nll(
    const BasicGaussianMixture<Scalar>& pred, const Eigen::MatrixBase<Derived>& y) {
  pred.validate();
  if (y.rows() != pred.points() || y.cols() != 1)
    throw ShapeError("mixture_nll: target shape mismatch");
  const Index k = pred.components();
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> log_w = pred.weights.array().log();
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> out(pred.points());
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> terms(k);
  for (Index n = 0; n < pred.points(); ++n) {
    for (Index j = 0; j < k; ++j)
      terms(j) = log_w(j) + gaussian_logpdf<Scalar>(y(n, 0), pred.means(n, j), pred.variances(n, j));
    out(n) = -logsumexp(terms);
  }
  return out;
}

template <typename Scalar, typename Derived>
Scalar mixture_nll(const BasicGaussianMixture<Scalar>& pred, const Eigen::MatrixBase<Derived>& y) {
  if (pred.points() == 0) throw ShapeError("mixture_nll: no points");
  return mixture_point_nll(pred, y).mean();
}

/// Root mean squared error of the mixture mean.
template <typename Scalar, typename Derived>
Scalar mixture_rmse(const BasicGaussianMixture<Scalar>& pred, const Eigen::MatrixBase<Derived>& y) {
  using std::sqrt;
  pred.validate();
  if (y.rows() != pred.points() || y.cols() != 1 || pred.points() == 0)
    throw ShapeError("mixture_rmse: target shape mismatch");
  return sqrt((pred.mean() - y.col(0)).squaredNorm() / Scalar(pred.points()));
}

}  // namespace dunal
