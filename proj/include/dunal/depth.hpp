#pragma once

#include <cmath>
#include <limits>
#include <span>
#include <vector>

#include "dunal/core.hpp"
#include "dunal/logmath.hpp"

namespace dunal {

/// Categorical distribution over depths 0..D, stored as log-probabilities.
/// Serves as the depth prior, the variational posterior and the exact
/// posterior.
template <typename Scalar>
struct BasicDepthDistribution {
  using VectorType = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

  VectorType log_probs;

  static BasicDepthDistribution uniform(int max_depth) {
    check_depth(max_depth);
    const Index k = max_depth + 1;
    return {VectorType::Constant(k, -std::log(Scalar(k)))};
  }

  /// Geometric prior beta_i proportional to rho^i.
  static BasicDepthDistribution decaying(int max_depth, Scalar rho) {
    check_depth(max_depth);
    if (!(rho > Scalar(0))) throw ConfigError("decaying prior: rho must be > 0");
    VectorType logits(max_depth + 1);
    for (Index i = 0; i <= max_depth; ++i) logits(i) = Scalar(i) * std::log(rho);
    return from_logits(logits);
  }

  static BasicDepthDistribution point_mass(int max_depth, int k) {
    check_depth(max_depth);
    if (k < 0 || k > max_depth) throw ConfigError("point_mass: depth out of range");
    VectorType lp = VectorType::Constant(max_depth + 1, -std::numeric_limits<Scalar>::infinity());
    lp(k) = Scalar(0);
    return {lp};
  }

  template <typename Derived>
  static BasicDepthDistribution from_logits(const Eigen::MatrixBase<Derived>& logits) {
    if (logits.size() == 0) throw ConfigError("depth distribution: empty logits");
    return {log_softmax(logits)};
  }

  Index size() const { return log_probs.size(); }
  int max_depth() const { return static_cast<int>(log_probs.size()) - 1; }
  VectorType probs() const { return log_probs.array().exp(); }

  /// Posterior-mean depth sum_i i q_i.
  Scalar mean_depth() const {
    const VectorType p = probs();
    Scalar m(0);
    for (Index i = 0; i < p.size(); ++i) m += Scalar(i) * p(i);
    return m;
  }

  void validate(Scalar tol = Scalar(1e-9)) const {
    using std::abs;
    if (log_probs.size() == 0) throw ShapeError("depth distribution: empty");
    if ((log_probs.array() > tol).any()) throw NumericError("depth distribution: log-prob > 0");
    if (abs(logsumexp(log_probs)) > tol) throw NumericError("depth distribution: not normalized");
  }

 private:
  static void check_depth(int max_depth) {
    if (max_depth < 0) throw ConfigError("depth distribution: max depth must be >= 0");
  }
};

using DepthDistribution = BasicDepthDistribution<double>;

/// Log-likelihood of every point under every depth's head: an N x (D+1)
/// matrix with entry (n, i) = log N(y_n; Yhat_i[n], sigma^2).
inline Matrix per_depth_loglik(std::span<const Matrix> outputs, const Matrix& y, double log_noise) {
  if (outputs.empty()) throw ShapeError("per_depth_loglik: no heads");
  if (y.cols() != 1) throw ShapeError("per_depth_loglik: targets must be a single column");
  const double var = std::exp(2.0 * log_noise);
  Matrix ll(y.rows(), static_cast<Index>(outputs.size()));
  for (std::size_t i = 0; i < outputs.size(); ++i) {
    const auto& yh = outputs[i];
    if (yh.rows() != y.rows() || yh.cols() != 1)
      throw ShapeError("per_depth_loglik: head " + std::to_string(i) + " shape mismatch");
    for (Index n = 0; n < y.rows(); ++n)
      ll(n, static_cast<Index>(i)) = gaussian_logpdf(y(n, 0), yh(n, 0), var);
  }
  if (!ll.allFinite()) throw NumericError("per_depth_loglik: non-finite log-likelihood");
  return ll;
}

namespace detail {

template <typename Derived, typename Scalar>
Eigen::Matrix<Scalar, Eigen::Dynamic, 1> joint_log(const Eigen::MatrixBase<Derived>& ll,
                                                   const BasicDepthDistribution<Scalar>& prior) {
  if (ll.cols() != prior.size())
    throw UsageError("depth inference: log-likelihood has " + std::to_string(ll.cols()) +
                     " depths but prior has " + std::to_string(prior.size()));
  return prior.log_probs + ll.colwise().sum().transpose();
}

}  // namespace detail

/// log sum_i beta_i prod_n p(y_n | x_n, d = i).
template <typename Derived, typename Scalar>
Scalar marginal_loglik(const Eigen::MatrixBase<Derived>& ll, const BasicDepthDistribution<Scalar>& prior) {
  return logsumexp(detail::joint_log(ll, prior));
}

/// Exact categorical posterior over depth.
template <typename Derived, typename Scalar>
BasicDepthDistribution<Scalar> exact_depth_posterior(const Eigen::MatrixBase<Derived>& ll,
                                                     const BasicDepthDistribution<Scalar>& prior) {
  const auto joint = detail::joint_log(ll, prior);
  const Scalar mll = logsumexp(joint);
  if (!std::isfinite(mll)) throw NumericError("exact_depth_posterior: non-finite evidence");
  return {(joint.array() - mll).matrix()};
}

/// KL(q || p) between categoricals; +inf support mismatch is an error.
template <typename Scalar>
Scalar categorical_kl(const BasicDepthDistribution<Scalar>& q, const BasicDepthDistribution<Scalar>& p) {
  if (q.size() != p.size()) throw UsageError("kl: length mismatch");
  Scalar kl(0);
  for (Index i = 0; i < q.size(); ++i) {
    const Scalar lq = q.log_probs(i);
    if (std::exp(lq) == Scalar(0)) continue;
    if (std::isinf(p.log_probs(i)))
      throw NumericError("kl: q has mass at depth " + std::to_string(i) +
                         " where the prior has none (KL = +inf)");
    kl += std::exp(lq) * (lq - p.log_probs(i));
  }
  return kl;
}

/// sum_n E_q[log p(y_n | x_n, d)] - KL(q || prior), evaluated exactly.
template <typename Derived, typename Scalar>
Scalar elbo(const Eigen::MatrixBase<Derived>& ll, const BasicDepthDistribution<Scalar>& q,
            const BasicDepthDistribution<Scalar>& prior) {
  if (ll.cols() != q.size()) throw UsageError("elbo: q length does not match depths");
  const Scalar kl = categorical_kl(q, prior);
  const auto totals = ll.colwise().sum();
  Scalar expected(0);
  for (Index i = 0; i < q.size(); ++i)
    if (std::exp(q.log_probs(i)) != Scalar(0)) expected += std::exp(q.log_probs(i)) * totals(i);
  return expected - kl;
}

}  // namespace dunal
