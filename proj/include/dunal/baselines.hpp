#pragma once

#include <vector>

#include "dunal/dun.hpp"
#include "dunal/mixture.hpp"
#include "dunal/nn.hpp"

namespace dunal {

/// Shared optimisation protocol for the weight-space baselines.
struct BaselineTrainConfig {
  int iterations = 1000;
  OptimizerConfig optimizer;
  bool validation_selection = true;
  int checkpoint_every = 10;

  void validate() const;
};

// ---------------------------------------------------------------- MC dropout

struct McdoConfig {
  double dropout_prob = 0.1;
  int n_test_samples = 10;
  int depth = 3;

  void validate() const;
};

/// Deterministic-weight network fit. `history.train` holds the summed
/// training NLL per iteration; `history.valid` the mean held-out NLL.
struct NetFit {
  Network net;
  TrainHistory history;
};

/// Gaussian-likelihood MLP trained with dropout active, checkpointed on the
/// eval-mode validation NLL. Only the last head is used. `base` supplies the
/// input/output/hidden sizes and the init seed.
NetFit mcdo_train(const Samples& train, const Samples& valid, const NetworkConfig& base,
                  const McdoConfig& cfg, const BaselineTrainConfig& train_cfg, Rng& rng);

/// One equally weighted component per dropout-mask forward pass.
GaussianMixturePredictive mcdo_predict(const Network& net, const Matrix& X, int n_samples, Rng& rng);

/// Plain network (no dropout) at the given depth.
NetFit sgd_train(const Samples& train, const Samples& valid, const NetworkConfig& base, int depth,
                 const BaselineTrainConfig& train_cfg, Rng& rng);

/// Single-Gaussian predictive from the eval-mode last head.
GaussianMixturePredictive sgd_predict(const Network& net, const Matrix& X);

// --------------------------------------------------------- mean-field VI

struct MfviConfig {
  int n_train_samples = 5;
  int n_test_samples = 10;
  double prior_std = 1.0;
  int depth = 3;
  double init_log_std = -5.0;

  void validate() const;
};

/// Factorised Gaussian posterior over one affine map's weights and biases.
struct GaussianVariationalLayer {
  Matrix w_mean;     // in x out
  Matrix w_log_std;  // in x out
  Matrix b_mean;     // 1 x out
  Matrix b_log_std;  // 1 x out
};

/// Residual MLP with a variational posterior over every affine map.
struct MfviNetwork {
  GaussianVariationalLayer input;
  std::vector<GaussianVariationalLayer> blocks;
  GaussianVariationalLayer output;
  Matrix log_noise;  // 1 x 1
  double prior_std = 1.0;

  double noise_var() const;
};

std::vector<ParamRef> param_refs(MfviNetwork& net);

MfviNetwork build_mfvi_network(const NetworkConfig& base, const MfviConfig& cfg);

/// Closed-form KL(q || N(0, prior_std^2 I)) summed over all weights and biases.
double mfvi_kl(std::span<const GaussianVariationalLayer> layers, double prior_std);
double mfvi_kl(const MfviNetwork& net);

/// One local-reparameterisation draw of an affine map's pre-activations:
/// N(X mu_W + mu_b, X^2 sigma_W^2 + sigma_b^2) with fresh per-element noise.
struct LrtSample {
  Matrix value;
  Matrix noise;   // standard normal draws
  Matrix stddev;  // per-element predictive std
};
LrtSample mfvi_forward_lrt(const GaussianVariationalLayer& layer, const Matrix& X, Rng& rng);

/// Monte-Carlo ELBO estimate (mean over samples of the summed log
/// likelihood, minus KL) and its gradients in `param_refs` order.
struct MfviObjective {
  double elbo = 0.0;
  std::vector<Matrix> grads;  // gradients of -ELBO
};
MfviObjective mfvi_objective(const MfviNetwork& net, const Samples& data, int n_samples, Rng& rng,
                             bool with_grads = true);

struct MfviFit {
  MfviNetwork net;
  TrainHistory history;  // ELBO estimates
};

/// Maximises the MC ELBO; weight decay is not applied (the KL regularises).
MfviFit mfvi_train(const Samples& train, const Samples& valid, const NetworkConfig& base,
                   const MfviConfig& cfg, const BaselineTrainConfig& train_cfg, Rng& rng);

/// One equally weighted component per sampled forward pass.
GaussianMixturePredictive mfvi_predict(const MfviNetwork& net, const Matrix& X, int n_samples, Rng& rng);

}  // namespace dunal
