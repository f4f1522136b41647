#pragma once

#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "dunal/core.hpp"
#include "dunal/depth.hpp"
#include "dunal/logmath.hpp"
#include "dunal/mixture.hpp"
#include "dunal/nn.hpp"

namespace dunal {

/// BALD score per point: entropy of the moment-matched Gaussian minus the
/// weighted mean of the component entropies. Cancellation noise down to
/// -1e-9 is clamped to zero.
template <typename Scalar>
Eigen::Matrix<Scalar, Eigen::Dynamic, 1> gaussian_mixture_bald(const BasicGaussianMixture<Scalar>& pred) {
  using std::log;
  if (pred.variances.size() > 0 && !(pred.variances.array() > Scalar(0)).all())
    throw NumericError("bald: nonpositive component variance");
  pred.validate();
  const auto total = pred.variance();
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> scores(pred.points());
  for (Index n = 0; n < pred.points(); ++n) {
    if (!(total(n) > Scalar(0))) throw NumericError("bald: degenerate mixture variance");
    Scalar expected(0);
    for (Index k = 0; k < pred.components(); ++k)
      expected += pred.weights(k) * gaussian_entropy(pred.variances(n, k));
    Scalar s = gaussian_entropy(total(n)) - expected;
    if (s < Scalar(-1e-9)) throw NumericError("bald: negative score " + std::to_string(double(s)));
    scores(n) = s < Scalar(0) ? Scalar(0) : s;
  }
  return scores;
}

enum class AcquisitionStrategy { bald_stochastic, bald_argmax, random };

std::string_view to_string(AcquisitionStrategy s);
AcquisitionStrategy parse_strategy(std::string_view name);

struct AcquisitionConfig {
  AcquisitionStrategy strategy = AcquisitionStrategy::bald_stochastic;
  double temperature = 10.0;
  int batch_size = 1;
  // Take the T -> 0+ limit of the stochastic strategy (uniform sampling).
  bool zero_temperature_limit = false;

  void validate() const;
};

/// One acquired point and the probability it had when it was drawn.
struct AcquisitionStep {
  Index pool_index = 0;
  double probability = 1.0;
  int query_round = 0;

  bool operator==(const AcquisitionStep&) const = default;
};

struct AcquisitionRecord {
  std::vector<AcquisitionStep> steps;

  Index size() const { return static_cast<Index>(steps.size()); }
};

/// Draws `cfg.batch_size` points from the pool one at a time without
/// replacement. `scores[j]` belongs to `pool[j]`. Returns the steps in draw
/// order; each step's probability is the renormalised one over the points
/// still in the pool at that draw.
std::vector<AcquisitionStep> stochastic_batch_acquire(const Vector& scores, std::span<const Index> pool,
                                                      const AcquisitionConfig& cfg, Rng& rng,
                                                      int query_round = 0);

/// Selection distribution over the remaining candidates for one draw.
Vector selection_probabilities(const Vector& scores, const AcquisitionConfig& cfg);

/// BALD over the depth posterior of a trained DUN, exact in the depth weights.
Vector dun_bald(const Network& net, const DepthDistribution& q, const Matrix& X);

/// BALD for an equal-weight mixture of Monte-Carlo sample predictions.
Vector mc_bald(const GaussianMixturePredictive& pred);

}  // namespace dunal
