#include "dunal/dun.hpp"

#include <cmath>

namespace dunal {

namespace {

struct ElboGrad {
  double value = 0.0;
  std::vector<Matrix> head_grads;  // d(-ELBO)/dYhat_i
  double log_noise_grad = 0.0;     // d(-ELBO)/dlog_sigma
  Matrix logit_grad;               // d(-ELBO)/dphi, 1 x (D+1)
};

// Negative-ELBO gradients for the likelihood head, the noise scale and the
// softmax-parameterised depth distribution.
ElboGrad elbo_with_grads(const std::vector<Matrix>& outputs, const Matrix& y, double log_noise,
                         const DepthDistribution& q, const DepthDistribution& prior) {
  const Matrix ll = per_depth_loglik(outputs, y, log_noise);
  ElboGrad out;
  out.value = elbo(ll, q, prior);

  const Vector qp = q.probs();
  const double inv_var = std::exp(-2.0 * log_noise);
  const auto k = static_cast<Index>(outputs.size());
  out.head_grads.resize(outputs.size());
  for (Index i = 0; i < k; ++i) {
    const Matrix resid = y - outputs[static_cast<std::size_t>(i)];
    out.head_grads[static_cast<std::size_t>(i)] = -qp(i) * inv_var * resid;
    out.log_noise_grad -= qp(i) * (resid.squaredNorm() * inv_var - static_cast<double>(y.rows()));
  }

  // dELBO/dphi_j = q_j (h_j - sum_k q_k h_k), h_j = L_j - log q_j + log beta_j
  const Vector totals = ll.colwise().sum().transpose();
  Vector h = totals - q.log_probs + prior.log_probs;
  for (Index i = 0; i < h.size(); ++i)
    if (qp(i) == 0.0) h(i) = 0.0;
  const double hbar = qp.dot(h);
  out.logit_grad = (-(qp.array() * (h.array() - hbar))).matrix().transpose();
  return out;
}

}  // namespace

void DunTrainConfig::validate() const {
  if (iterations < 1) throw ConfigError("dun training: iterations must be >= 1");
  if (checkpoint_every < 1) throw ConfigError("dun training: checkpoint_every must be >= 1");
}

DunObjective dun_objective(const Network& net, const Matrix& logits, const DepthDistribution& prior,
                           const Samples& data, Mode mode, Rng* rng) {
  if (logits.rows() != 1 || logits.cols() != net.depth() + 1)
    throw ShapeError("dun_objective: logits must be 1 x (D+1)");
  const auto q = DepthDistribution::from_logits(logits.row(0).transpose());
  const auto fwd = forward_all_depths(net, data.X, mode, rng);
  ElboGrad eg = elbo_with_grads(fwd.outputs, data.y, net.log_noise(), q, prior);
  DunObjective out;
  out.elbo = eg.value;
  out.grads = backward(net, eg.head_grads, fwd.cache);
  out.grads.log_noise(0, 0) = eg.log_noise_grad;
  out.logit_grad = std::move(eg.logit_grad);
  return out;
}

double dun_elbo(const Network& net, const DepthDistribution& q, const DepthDistribution& prior,
                const Samples& data) {
  const auto fwd = forward_all_depths(net, data.X, Mode::eval);
  return elbo(per_depth_loglik(fwd.outputs, data.y, net.log_noise()), q, prior);
}

DepthDistribution dun_exact_posterior(const Network& net, const DepthDistribution& prior,
                                      const Samples& data) {
  const auto fwd = forward_all_depths(net, data.X, Mode::eval);
  return exact_depth_posterior(per_depth_loglik(fwd.outputs, data.y, net.log_noise()), prior);
}

DunFit train_dun(const Samples& train, const Samples& valid, const NetworkConfig& net_cfg,
                 const DunTrainConfig& cfg, Rng& rng) {
  cfg.validate();
  if (train.empty()) throw UsageError("train_dun: empty training set");
  if (train.y.rows() != train.X.rows()) throw ShapeError("train_dun: X/y row mismatch");

  DunFit fit;
  fit.net = build_network(net_cfg);
  const int depth = fit.net.depth();
  fit.prior = cfg.prior.value_or(DepthDistribution::uniform(depth));
  if (fit.prior.max_depth() != depth) throw ConfigError("train_dun: prior length != depth + 1");
  fit.prior.validate();

  // Variational logits start at the prior; depths the prior excludes stay at
  // -inf and receive zero gradient.
  Matrix logits = fit.prior.log_probs.transpose();
  auto current_q = [&] { return DepthDistribution::from_logits(logits.row(0).transpose()); };

  OptimizerState opt{cfg.optimizer, {}};
  const bool use_valid = cfg.validation_selection && !valid.empty();
  const Samples& select_on = use_valid ? valid : train;

  Network best_net = fit.net;
  DepthDistribution best_q = current_q();
  double best = -std::numeric_limits<double>::infinity();
  auto checkpoint = [&](int it) {
    const auto q = current_q();
    const double v = dun_elbo(fit.net, q, fit.prior, select_on);
    fit.history.valid.emplace_back(it, v);
    if (std::isfinite(v) && v > best) {
      best = v;
      fit.history.best_iteration = it;
      best_q = q;
      best_net = fit.net;
    }
  };

  fit.history.train.reserve(static_cast<std::size_t>(cfg.iterations));
  for (int it = 0; it < cfg.iterations; ++it) {
    if (cfg.validation_selection && it % cfg.checkpoint_every == 0) checkpoint(it);

    const DepthDistribution q = current_q();
    ForwardResult fwd;
    ElboGrad eg;
    try {
      fwd = forward_all_depths(fit.net, train.X, Mode::train, &rng);
      eg = elbo_with_grads(fwd.outputs, train.y, fit.net.log_noise(), q, fit.prior);
    } catch (const NumericError& e) {
      throw TrainingError(std::string("train_dun: ") + e.what(), it);
    }
    if (!std::isfinite(eg.value)) throw TrainingError("train_dun: non-finite ELBO", it);
    fit.history.train.push_back(eg.value);

    // Network tensors step on the per-point ELBO (their curvature would
    // otherwise grow with N); the depth logits keep the summed objective.
    const double inv_n = 1.0 / static_cast<double>(train.size());
    for (auto& g : eg.head_grads) g *= inv_n;
    Parameters grads = backward(fit.net, eg.head_grads, fwd.cache);
    grads.log_noise(0, 0) = eg.log_noise_grad * inv_n;

    auto params = fit.net.params.refs();
    auto grad_refs = grads.refs();
    params.push_back({&logits, "depth_logits", false});
    grad_refs.push_back({&eg.logit_grad, "depth_logits", false});
    sgd_step(params, grad_refs, opt);
  }

  if (cfg.validation_selection) {
    checkpoint(cfg.iterations);
    fit.net = std::move(best_net);
    fit.q = std::move(best_q);
  } else {
    fit.q = current_q();
  }
  return fit;
}

GaussianMixturePredictive dun_predict(const Network& net, const DepthDistribution& q,
                                      const Matrix& X) {
  q.validate();
  if (q.max_depth() != net.depth()) throw UsageError("dun_predict: q length != depth + 1");
  const auto fwd = forward_all_depths(net, X, Mode::eval);
  GaussianMixturePredictive pred;
  pred.weights = q.probs();
  const auto k = static_cast<Index>(fwd.outputs.size());
  pred.means.resize(X.rows(), k);
  for (Index i = 0; i < k; ++i) pred.means.col(i) = fwd.outputs[static_cast<std::size_t>(i)].col(0);
  pred.variances = Matrix::Constant(X.rows(), k, net.noise_var());
  return pred;
}

}  // namespace dunal
