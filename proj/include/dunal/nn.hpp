#pragma once

#include <span>
#include <string>
#include <vector>

#include "dunal/core.hpp"

namespace dunal {

struct NetworkConfig {
  Index input_dim = 1;
  Index hidden_dim = 100;
  int depth = 10;  // number of residual blocks
  Index output_dim = 1;
  bool use_batchnorm = false;
  double dropout_prob = 0.0;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Non-owning handle on one trainable tensor.
struct ParamRef {
  Matrix* tensor;
  std::string name;
  bool decay;  // subject to weight decay
};

struct BlockParams {
  Matrix weight;  // hidden x hidden
  Matrix bias;    // 1 x hidden
  Matrix scale;   // 1 x hidden, empty without batchnorm
  Matrix shift;   // 1 x hidden, empty without batchnorm
};

/// All trainable tensors of a residual MLP. Also used as the gradient
/// container, so every gradient buffer is shape-matched by construction.
struct Parameters {
  Matrix in_weight;  // input_dim x hidden
  Matrix in_bias;    // 1 x hidden
  std::vector<BlockParams> blocks;
  Matrix out_weight;  // hidden x output_dim
  Matrix out_bias;    // 1 x output_dim
  Matrix log_noise;   // 1 x 1, log sigma of the Gaussian likelihood

  std::vector<ParamRef> refs();
  Parameters zeros_like() const;
};

struct NormStats {
  RowVector mean;
  RowVector var;
};

/// Residual MLP: f_0 (affine) -> D residual blocks -> shared affine output
/// head applied to every block's activations.
struct Network {
  NetworkConfig config;
  Parameters params;
  std::vector<NormStats> running;  // one per block when batchnorm is on

  int depth() const { return static_cast<int>(params.blocks.size()); }
  double log_noise() const { return params.log_noise(0, 0); }
  double noise_var() const;
};

Network build_network(const NetworkConfig& cfg);

enum class Mode {
  train,   // batch statistics, running stats updated, dropout active
  eval,    // running statistics, no dropout
  sample,  // running statistics, dropout active (MC dropout prediction)
};

struct BlockCache {
  Matrix normalized;  // xhat (batchnorm) or the raw pre-activation
  RowVector inv_std;  // batchnorm only
  Matrix relu_out;    // after batchnorm + ReLU, before dropout
  Matrix dropout;     // scaled keep-mask, empty when no dropout applied
};

struct ForwardCache {
  Matrix input;
  std::vector<Matrix> activations;  // a_0 .. a_D
  std::vector<BlockCache> blocks;
  bool batch_stats = false;

  bool empty() const { return activations.empty(); }
};

struct ForwardResult {
  std::vector<Matrix> outputs;  // Yhat_0 .. Yhat_D
  ForwardCache cache;
};

/// Forward pass emitting the output head at every depth. Train mode updates
/// the running batchnorm statistics; `rng` is required whenever dropout is
/// active.
ForwardResult forward_all_depths(Network& net, const Matrix& X, Mode mode,
                                 Rng* rng = nullptr);

/// Same as above but never touches the running statistics.
ForwardResult forward_all_depths(const Network& net, const Matrix& X, Mode mode,
                                 Rng* rng = nullptr);

/// Reverse-mode gradients of a scalar loss given dL/dYhat_i for every head.
/// log_noise gradient is left at zero; the caller owns the likelihood.
Parameters backward(const Network& net, std::span<const Matrix> upstream,
                    const ForwardCache& cache);

struct OptimizerConfig {
  double learning_rate = 1e-4;
  double momentum = 0.9;
  double weight_decay = 1e-5;
};

struct OptimizerState {
  OptimizerConfig config;
  std::vector<Matrix> velocity;  // lazily shaped on first step
};

/// Heavy-ball SGD: v <- mu v + (g + wd p); p <- p - lr v.
void sgd_step(std::span<const ParamRef> params, std::span<const ParamRef> grads,
              OptimizerState& state);

}  // namespace dunal
