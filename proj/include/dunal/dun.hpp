#pragma once

#include <optional>
#include <utility>
#include <vector>

#include "dunal/depth.hpp"
#include "dunal/mixture.hpp"
#include "dunal/nn.hpp"

namespace dunal {

struct DunTrainConfig {
  int iterations = 1000;
  OptimizerConfig optimizer;
  std::optional<DepthDistribution> prior;  // uniform over 0..D when unset
  bool validation_selection = true;
  int checkpoint_every = 10;

  void validate() const;
};

/// Objective trace of one optimisation run. `train` holds one value per
/// iteration (computed on the batch the step was taken on); `valid` holds
/// (iteration, value) pairs at checkpoints.
struct TrainHistory {
  std::vector<double> train;
  std::vector<std::pair<int, double>> valid;
  int best_iteration = -1;
};

struct DunFit {
  Network net;
  DepthDistribution q;
  DepthDistribution prior;
  TrainHistory history;
};

/// Maximises the exact depth ELBO jointly over weights, variational depth
/// logits and the likelihood noise with full-batch momentum SGD. Returns the
/// checkpoint with the best held-out ELBO (training ELBO in eval mode when
/// `valid` is empty).
DunFit train_dun(const Samples& train, const Samples& valid, const NetworkConfig& net_cfg,
                 const DunTrainConfig& cfg, Rng& rng);

/// Exact ELBO of `data` and the gradients of -ELBO with respect to every
/// network tensor (log_noise included) and the depth logits (1 x (D+1)).
/// Uses the const forward pass, so running statistics are left untouched.
struct DunObjective {
  double elbo = 0.0;
  Parameters grads;
  Matrix logit_grad;
};
DunObjective dun_objective(const Network& net, const Matrix& logits, const DepthDistribution& prior,
                           const Samples& data, Mode mode, Rng* rng = nullptr);

/// Eval-mode ELBO of a fitted network on `data`.
double dun_elbo(const Network& net, const DepthDistribution& q, const DepthDistribution& prior,
                const Samples& data);

/// Exact depth posterior of a fitted network's weights on `data`.
DepthDistribution dun_exact_posterior(const Network& net, const DepthDistribution& prior,
                                      const Samples& data);

/// Depth-marginal predictive: one component per depth, weighted by q.
GaussianMixturePredictive dun_predict(const Network& net, const DepthDistribution& q,
                                      const Matrix& X);

}  // namespace dunal
