#pragma once

#include <cmath>
#include <limits>
#include <numbers>

#include <Eigen/Core>

namespace dunal {

/// log(sum(exp(v))) without overflow. Entries may be -inf; an all -inf (or
/// empty) input returns -inf.
template <typename Derived>
typename Derived::Scalar logsumexp(const Eigen::DenseBase<Derived>& v) {
  using Scalar = typename Derived::Scalar;
  using std::exp;
  using std::isinf;
  using std::log;
  if (v.size() == 0) return -std::numeric_limits<Scalar>::infinity();
  const Scalar m = v.maxCoeff();
  if (isinf(m)) return m;
  return m + log((v.derived().array() - m).exp().sum());
}

/// log N(y; mean, var).
template <typename Scalar>
Scalar gaussian_logpdf(Scalar y, Scalar mean, Scalar var) {
  using std::log;
  const Scalar r = y - mean;
  return Scalar(-0.5) * (log(Scalar(2) * std::numbers::pi_v<Scalar> * var) + r * r / var);
}

/// Differential entropy of N(., var).
template <typename Scalar>
Scalar gaussian_entropy(Scalar var) {
  using std::log;
  return Scalar(0.5) * log(Scalar(2) * std::numbers::pi_v<Scalar> * std::numbers::e_v<Scalar> * var);
}

/// Stable log-softmax of a vector.
template <typename Derived>
Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, 1> log_softmax(
    const Eigen::MatrixBase<Derived>& logits) {
  return (logits.derived().array() - logsumexp(logits)).matrix();
}

}  // namespace dunal
