#include "dunal/acquisition.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "dunal/dun.hpp"

namespace dunal {

std::string_view to_string(AcquisitionStrategy s) {
  switch (s) {
    case AcquisitionStrategy::bald_stochastic: return "bald_stochastic";
    case AcquisitionStrategy::bald_argmax: return "bald_argmax";
    case AcquisitionStrategy::random: return "random";
  }
  return "unknown";
}

AcquisitionStrategy parse_strategy(std::string_view name) {
  for (auto s : {AcquisitionStrategy::bald_stochastic, AcquisitionStrategy::bald_argmax,
                 AcquisitionStrategy::random})
    if (to_string(s) == name) return s;
  throw ConfigError("unknown acquisition strategy '" + std::string(name) + "'");
}

void AcquisitionConfig::validate() const {
  if (batch_size < 1) throw ConfigError("acquisition: batch_size must be >= 1");
  if (strategy == AcquisitionStrategy::bald_stochastic && !zero_temperature_limit &&
      !(temperature > 0.0 && std::isfinite(temperature)))
    throw ConfigError("acquisition: temperature must be > 0");
}

Vector selection_probabilities(const Vector& scores, const AcquisitionConfig& cfg) {
  const Index n = scores.size();
  if (n == 0) throw UsageError("acquisition: empty pool");
  switch (cfg.strategy) {
    case AcquisitionStrategy::random:
      return Vector::Constant(n, 1.0 / static_cast<double>(n));
    case AcquisitionStrategy::bald_argmax: {
      Index best = 0;
      for (Index i = 1; i < n; ++i)
        if (scores(i) > scores(best)) best = i;
      Vector p = Vector::Zero(n);
      p(best) = 1.0;
      return p;
    }
    case AcquisitionStrategy::bald_stochastic:
      if (cfg.zero_temperature_limit) return Vector::Constant(n, 1.0 / static_cast<double>(n));
      if (!scores.allFinite()) throw NumericError("acquisition: non-finite score");
      return log_softmax((cfg.temperature * scores).eval()).array().exp().matrix();
  }
  throw ConfigError("acquisition: unknown strategy");
}

std::vector<AcquisitionStep> stochastic_batch_acquire(const Vector& scores, std::span<const Index> pool,
                                                      const AcquisitionConfig& cfg, Rng& rng,
                                                      int query_round) {
  cfg.validate();
  if (pool.empty()) throw UsageError("acquisition: empty pool");
  if (scores.size() != static_cast<Index>(pool.size()))
    throw ShapeError("acquisition: " + std::to_string(scores.size()) + " scores for a pool of " +
                     std::to_string(pool.size()));
  if (static_cast<std::size_t>(cfg.batch_size) > pool.size())
    throw UsageError("acquisition: batch of " + std::to_string(cfg.batch_size) + " exceeds pool of " +
                     std::to_string(pool.size()));

  // Candidates are kept sorted by pool index so argmax ties resolve to the
  // lowest index.
  std::vector<std::size_t> order(pool.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return pool[a] < pool[b]; });
  std::vector<Index> remaining_idx;
  std::vector<double> remaining_score;
  for (auto j : order) {
    remaining_idx.push_back(pool[j]);
    remaining_score.push_back(scores(static_cast<Index>(j)));
  }

  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<AcquisitionStep> steps;
  steps.reserve(static_cast<std::size_t>(cfg.batch_size));
  for (int b = 0; b < cfg.batch_size; ++b) {
    const Vector s = Eigen::Map<const Vector>(remaining_score.data(), static_cast<Index>(remaining_score.size()));
    const Vector p = selection_probabilities(s, cfg);

    Index pick = 0;
    if (cfg.strategy == AcquisitionStrategy::bald_argmax) {
      p.maxCoeff(&pick);
    } else {
      const double u = unit(rng);
      double acc = 0.0;
      pick = p.size() - 1;
      for (Index i = 0; i < p.size(); ++i) {
        acc += p(i);
        if (u < acc) {
          pick = i;
          break;
        }
      }
      // Guard against rounding landing on a zero-probability tail entry.
      while (p(pick) == 0.0 && pick > 0) --pick;
    }
    const auto up = static_cast<std::size_t>(pick);
    steps.push_back({remaining_idx[up], p(pick), query_round});
    remaining_idx.erase(remaining_idx.begin() + static_cast<std::ptrdiff_t>(up));
    remaining_score.erase(remaining_score.begin() + static_cast<std::ptrdiff_t>(up));
  }
  return steps;
}

Vector dun_bald(const Network& net, const DepthDistribution& q, const Matrix& X) {
  return gaussian_mixture_bald(dun_predict(net, q, X));
}

Vector mc_bald(const GaussianMixturePredictive& pred) {
  if (pred.components() > 0 &&
      (pred.weights.array() - 1.0 / static_cast<double>(pred.components())).abs().maxCoeff() > 1e-12)
    throw UsageError("mc_bald: sample mixtures must be equally weighted");
  return gaussian_mixture_bald(pred);
}

}  // namespace dunal
