#include "dunal/baselines.hpp"

#include <cmath>
#include <limits>
#include <numbers>

namespace dunal {

namespace {

double gaussian_nll_sum(const Matrix& y, const Matrix& mean, double log_noise) {
  const double var = std::exp(2.0 * log_noise);
  const double n = static_cast<double>(y.rows());
  return 0.5 * n * std::log(2.0 * std::numbers::pi * var) + 0.5 * (y - mean).squaredNorm() / var;
}

double eval_mean_nll(const Network& net, const Samples& data) {
  const auto fwd = forward_all_depths(net, data.X, Mode::eval);
  return gaussian_nll_sum(data.y, fwd.outputs.back(), net.log_noise()) /
         static_cast<double>(data.size());
}

void check_train_inputs(const Samples& train, const char* who) {
  if (train.empty()) throw UsageError(std::string(who) + ": empty training set");
  if (train.y.rows() != train.X.rows() || train.y.cols() != 1)
    throw ShapeError(std::string(who) + ": X/y shape mismatch");
}

NetFit train_last_head(const Samples& train, const Samples& valid, const NetworkConfig& net_cfg,
                       const BaselineTrainConfig& cfg, Rng& rng, const char* who) {
  cfg.validate();
  check_train_inputs(train, who);
  NetFit fit;
  fit.net = build_network(net_cfg);
  OptimizerState opt{cfg.optimizer, {}};
  const Samples& select_on = (cfg.validation_selection && !valid.empty()) ? valid : train;

  Network best_net = fit.net;
  double best = std::numeric_limits<double>::infinity();
  auto checkpoint = [&](int it) {
    const double v = eval_mean_nll(fit.net, select_on);
    fit.history.valid.emplace_back(it, v);
    if (std::isfinite(v) && v < best) {
      best = v;
      fit.history.best_iteration = it;
      best_net = fit.net;
    }
  };

  const int depth = fit.net.depth();
  std::vector<Matrix> upstream(static_cast<std::size_t>(depth) + 1);
  for (auto& u : upstream) u = Matrix::Zero(train.size(), 1);

  for (int it = 0; it < cfg.iterations; ++it) {
    if (cfg.validation_selection && it % cfg.checkpoint_every == 0) checkpoint(it);
    ForwardResult fwd;
    try {
      fwd = forward_all_depths(fit.net, train.X, Mode::train, &rng);
    } catch (const NumericError& e) {
      throw TrainingError(std::string(who) + ": " + e.what(), it);
    }
    const double log_noise = fit.net.log_noise();
    const double loss = gaussian_nll_sum(train.y, fwd.outputs.back(), log_noise);
    if (!std::isfinite(loss)) throw TrainingError(std::string(who) + ": non-finite loss", it);
    fit.history.train.push_back(loss);

    // Steps follow the per-point NLL, as for the DUN network tensors.
    const double inv_n = 1.0 / static_cast<double>(train.size());
    const double inv_var = std::exp(-2.0 * log_noise);
    const Matrix resid = train.y - fwd.outputs.back();
    upstream.back() = -inv_n * inv_var * resid;
    Parameters grads = backward(fit.net, upstream, fwd.cache);
    grads.log_noise(0, 0) = 1.0 - inv_n * resid.squaredNorm() * inv_var;
    sgd_step(fit.net.params.refs(), grads.refs(), opt);
  }
  if (cfg.validation_selection) {
    checkpoint(cfg.iterations);
    fit.net = std::move(best_net);
  }
  return fit;
}

GaussianMixturePredictive stack_components(const std::vector<Matrix>& columns, double var) {
  const auto k = static_cast<Index>(columns.size());
  const Index n = columns.front().rows();
  Matrix means(n, k);
  for (Index j = 0; j < k; ++j) means.col(j) = columns[static_cast<std::size_t>(j)].col(0);
  return GaussianMixturePredictive::equal_weights(std::move(means), Matrix::Constant(n, k, var));
}

// ------------------------------------------------------------- MFVI helpers

GaussianVariationalLayer make_layer(Index in, Index out, double gain, double log_std, Rng& rng) {
  std::normal_distribution<double> normal(0.0, std::sqrt(gain / static_cast<double>(in)));
  GaussianVariationalLayer l;
  l.w_mean.resize(in, out);
  for (Index r = 0; r < in; ++r)
    for (Index c = 0; c < out; ++c) l.w_mean(r, c) = normal(rng);
  l.w_log_std = Matrix::Constant(in, out, log_std);
  l.b_mean = Matrix::Zero(1, out);
  l.b_log_std = Matrix::Constant(1, out, log_std);
  return l;
}

struct LayerCache {
  Matrix input;
  Matrix noise;
  Matrix stddev;
};

struct MfviPass {
  Matrix output;
  std::vector<LayerCache> layers;  // input, blocks..., output
  std::vector<Matrix> relu_out;    // per block
};

MfviPass mfvi_forward(const MfviNetwork& net, const Matrix& X, Rng& rng) {
  MfviPass pass;
  pass.layers.reserve(net.blocks.size() + 2);
  auto apply = [&](const GaussianVariationalLayer& l, const Matrix& in) {
    LrtSample s = mfvi_forward_lrt(l, in, rng);
    pass.layers.push_back({in, std::move(s.noise), std::move(s.stddev)});
    return std::move(s.value);
  };
  Matrix a = apply(net.input, X);
  for (const auto& blk : net.blocks) {
    Matrix r = apply(blk, a).cwiseMax(0.0);
    a += r;
    pass.relu_out.push_back(std::move(r));
  }
  pass.output = apply(net.output, a);
  return pass;
}

// Gradients of one LRT layer; returns dL/dinput.
Matrix lrt_backward(const GaussianVariationalLayer& l, const LayerCache& c, const Matrix& dz,
                    Matrix& g_wm, Matrix& g_wls, Matrix& g_bm, Matrix& g_bls) {
  const Matrix w_var = (2.0 * l.w_log_std.array()).exp().matrix();
  const Matrix b_var = (2.0 * l.b_log_std.array()).exp().matrix();
  const Matrix dv = (dz.array() * c.noise.array() / (2.0 * c.stddev.array())).matrix();
  const Matrix x2 = c.input.cwiseAbs2();

  g_wm.noalias() += c.input.transpose() * dz;
  g_bm += dz.colwise().sum();
  g_wls += ((x2.transpose() * dv).array() * 2.0 * w_var.array()).matrix();
  g_bls += (dv.colwise().sum().array() * 2.0 * b_var.array()).matrix();

  Matrix dx = dz * l.w_mean.transpose();
  dx += (2.0 * c.input.array() * (dv * w_var.transpose()).array()).matrix();
  return dx;
}

}  // namespace

void BaselineTrainConfig::validate() const {
  if (iterations < 1) throw ConfigError("baseline training: iterations must be >= 1");
  if (checkpoint_every < 1) throw ConfigError("baseline training: checkpoint_every must be >= 1");
}

void McdoConfig::validate() const {
  if (!(dropout_prob >= 0.0 && dropout_prob < 1.0)) throw ConfigError("mcdo: dropout_prob must lie in [0, 1)");
  if (n_test_samples < 1) throw ConfigError("mcdo: n_test_samples must be >= 1");
  if (depth < 0) throw ConfigError("mcdo: depth must be >= 0");
}

void MfviConfig::validate() const {
  if (n_train_samples < 1 || n_test_samples < 1) throw ConfigError("mfvi: sample counts must be >= 1");
  if (!(prior_std > 0.0)) throw ConfigError("mfvi: prior_std must be > 0");
  if (depth < 0) throw ConfigError("mfvi: depth must be >= 0");
}

NetFit mcdo_train(const Samples& train, const Samples& valid, const NetworkConfig& base,
                  const McdoConfig& cfg, const BaselineTrainConfig& train_cfg, Rng& rng) {
  cfg.validate();
  NetworkConfig nc = base;
  nc.depth = cfg.depth;
  nc.dropout_prob = cfg.dropout_prob;
  nc.use_batchnorm = false;
  return train_last_head(train, valid, nc, train_cfg, rng, "mcdo_train");
}

GaussianMixturePredictive mcdo_predict(const Network& net, const Matrix& X, int n_samples, Rng& rng) {
  if (n_samples < 1) throw ConfigError("mcdo_predict: n_samples must be >= 1");
  std::vector<Matrix> draws;
  draws.reserve(static_cast<std::size_t>(n_samples));
  for (int s = 0; s < n_samples; ++s)
    draws.push_back(forward_all_depths(net, X, Mode::sample, &rng).outputs.back());
  return stack_components(draws, net.noise_var());
}

NetFit sgd_train(const Samples& train, const Samples& valid, const NetworkConfig& base, int depth,
                 const BaselineTrainConfig& train_cfg, Rng& rng) {
  NetworkConfig nc = base;
  nc.depth = depth;
  nc.dropout_prob = 0.0;
  nc.use_batchnorm = false;
  return train_last_head(train, valid, nc, train_cfg, rng, "sgd_train");
}

GaussianMixturePredictive sgd_predict(const Network& net, const Matrix& X) {
  return stack_components({forward_all_depths(net, X, Mode::eval).outputs.back()}, net.noise_var());
}

// ------------------------------------------------------------------- MFVI

double MfviNetwork::noise_var() const { return std::exp(2.0 * log_noise(0, 0)); }

std::vector<ParamRef> param_refs(MfviNetwork& net) {
  std::vector<ParamRef> out;
  auto add = [&](GaussianVariationalLayer& l, const std::string& tag) {
    out.push_back({&l.w_mean, tag + ".w_mean", false});
    out.push_back({&l.w_log_std, tag + ".w_log_std", false});
    out.push_back({&l.b_mean, tag + ".b_mean", false});
    out.push_back({&l.b_log_std, tag + ".b_log_std", false});
  };
  add(net.input, "in");
  for (std::size_t i = 0; i < net.blocks.size(); ++i) add(net.blocks[i], "block" + std::to_string(i + 1));
  add(net.output, "out");
  out.push_back({&net.log_noise, "log_noise", false});
  return out;
}

MfviNetwork build_mfvi_network(const NetworkConfig& base, const MfviConfig& cfg) {
  cfg.validate();
  NetworkConfig nc = base;
  nc.depth = cfg.depth;
  nc.validate();
  Rng rng(nc.seed);
  MfviNetwork net;
  net.prior_std = cfg.prior_std;
  net.input = make_layer(nc.input_dim, nc.hidden_dim, 2.0, cfg.init_log_std, rng);
  for (int i = 0; i < nc.depth; ++i)
    net.blocks.push_back(make_layer(nc.hidden_dim, nc.hidden_dim, 2.0, cfg.init_log_std, rng));
  net.output = make_layer(nc.hidden_dim, nc.output_dim, 1.0, cfg.init_log_std, rng);
  net.log_noise = Matrix::Zero(1, 1);
  return net;
}

double mfvi_kl(std::span<const GaussianVariationalLayer> layers, double prior_std) {
  if (!(prior_std > 0.0)) throw ConfigError("mfvi_kl: prior_std must be > 0");
  const double pv = prior_std * prior_std;
  const double log_p = std::log(prior_std);
  auto term = [&](const Matrix& mean, const Matrix& log_std) {
    return (log_p - log_std.array() + ((2.0 * log_std.array()).exp() + mean.array().square()) / (2.0 * pv) - 0.5)
        .sum();
  };
  double kl = 0.0;
  for (const auto& l : layers) kl += term(l.w_mean, l.w_log_std) + term(l.b_mean, l.b_log_std);
  return kl;
}

double mfvi_kl(const MfviNetwork& net) {
  std::vector<GaussianVariationalLayer> all;
  all.reserve(net.blocks.size() + 2);
  all.push_back(net.input);
  all.insert(all.end(), net.blocks.begin(), net.blocks.end());
  all.push_back(net.output);
  return mfvi_kl(all, net.prior_std);
}

LrtSample mfvi_forward_lrt(const GaussianVariationalLayer& layer, const Matrix& X, Rng& rng) {
  if (X.cols() != layer.w_mean.rows()) throw ShapeError("mfvi_forward_lrt: input width mismatch");
  const Matrix mean = (X * layer.w_mean).rowwise() + layer.b_mean.row(0);
  const Matrix w_var = (2.0 * layer.w_log_std.array()).exp().matrix();
  const RowVector b_var = (2.0 * layer.b_log_std.array()).exp().matrix();
  Matrix var = (X.cwiseAbs2() * w_var).rowwise() + b_var;

  LrtSample s;
  s.stddev = var.cwiseSqrt();
  s.noise.resize(mean.rows(), mean.cols());
  std::normal_distribution<double> normal;
  for (Index r = 0; r < s.noise.rows(); ++r)
    for (Index c = 0; c < s.noise.cols(); ++c) s.noise(r, c) = normal(rng);
  s.value = mean + s.stddev.cwiseProduct(s.noise);
  return s;
}

MfviObjective mfvi_objective(const MfviNetwork& net, const Samples& data, int n_samples, Rng& rng,
                             bool with_grads) {
  if (n_samples < 1) throw ConfigError("mfvi_objective: n_samples must be >= 1");
  const double log_noise = net.log_noise(0, 0);
  const double inv_var = std::exp(-2.0 * log_noise);
  const double scale = 1.0 / n_samples;

  MfviObjective out;
  MfviNetwork g;  // gradient accumulator shaped like net
  if (with_grads) {
    g = net;
    for (auto& r : param_refs(g)) r.tensor->setZero();
  }

  double expected = 0.0;
  for (int s = 0; s < n_samples; ++s) {
    MfviPass pass = mfvi_forward(net, data.X, rng);
    expected -= scale * gaussian_nll_sum(data.y, pass.output, log_noise);
    if (!with_grads) continue;

    const Matrix resid = data.y - pass.output;
    g.log_noise(0, 0) += scale * (static_cast<double>(data.size()) - resid.squaredNorm() * inv_var);
    Matrix d = -scale * inv_var * resid;

    std::size_t li = pass.layers.size() - 1;
    d = lrt_backward(net.output, pass.layers[li], d, g.output.w_mean, g.output.w_log_std,
                     g.output.b_mean, g.output.b_log_std);
    for (std::size_t k = net.blocks.size(); k-- > 0;) {
      --li;
      const Matrix dz = (pass.relu_out[k].array() > 0.0).select(d, 0.0);
      auto& gb = g.blocks[k];
      d += lrt_backward(net.blocks[k], pass.layers[li], dz, gb.w_mean, gb.w_log_std, gb.b_mean,
                        gb.b_log_std);
    }
    lrt_backward(net.input, pass.layers[0], d, g.input.w_mean, g.input.w_log_std, g.input.b_mean,
                 g.input.b_log_std);
  }

  out.elbo = expected - mfvi_kl(net);
  if (!with_grads) return out;

  // KL gradients: d/dmu = mu / s_p^2, d/dlog_sigma = sigma^2 / s_p^2 - 1.
  const double pv = net.prior_std * net.prior_std;
  auto add_kl = [&](const GaussianVariationalLayer& l, GaussianVariationalLayer& gl) {
    gl.w_mean += l.w_mean / pv;
    gl.b_mean += l.b_mean / pv;
    gl.w_log_std += (((2.0 * l.w_log_std.array()).exp() / pv) - 1.0).matrix();
    gl.b_log_std += (((2.0 * l.b_log_std.array()).exp() / pv) - 1.0).matrix();
  };
  add_kl(net.input, g.input);
  for (std::size_t k = 0; k < net.blocks.size(); ++k) add_kl(net.blocks[k], g.blocks[k]);
  add_kl(net.output, g.output);

  for (auto& r : param_refs(g)) out.grads.push_back(std::move(*r.tensor));
  return out;
}

MfviFit mfvi_train(const Samples& train, const Samples& valid, const NetworkConfig& base,
                   const MfviConfig& cfg, const BaselineTrainConfig& train_cfg, Rng& rng) {
  train_cfg.validate();
  check_train_inputs(train, "mfvi_train");
  MfviFit fit;
  fit.net = build_mfvi_network(base, cfg);
  OptimizerConfig oc = train_cfg.optimizer;
  oc.weight_decay = 0.0;
  OptimizerState opt{oc, {}};
  const Samples& select_on = (train_cfg.validation_selection && !valid.empty()) ? valid : train;

  MfviNetwork best_net = fit.net;
  double best = -std::numeric_limits<double>::infinity();
  auto checkpoint = [&](int it) {
    const double v = mfvi_objective(fit.net, select_on, cfg.n_train_samples, rng, false).elbo;
    fit.history.valid.emplace_back(it, v);
    if (std::isfinite(v) && v > best) {
      best = v;
      fit.history.best_iteration = it;
      best_net = fit.net;
    }
  };

  for (int it = 0; it < train_cfg.iterations; ++it) {
    if (train_cfg.validation_selection && it % train_cfg.checkpoint_every == 0) checkpoint(it);
    MfviObjective obj = mfvi_objective(fit.net, train, cfg.n_train_samples, rng);
    if (!std::isfinite(obj.elbo)) throw TrainingError("mfvi_train: non-finite ELBO", it);
    fit.history.train.push_back(obj.elbo);

    for (auto& g : obj.grads) g /= static_cast<double>(train.size());
    auto params = param_refs(fit.net);
    std::vector<ParamRef> grads;
    grads.reserve(obj.grads.size());
    for (std::size_t i = 0; i < obj.grads.size(); ++i) grads.push_back({&obj.grads[i], params[i].name, false});
    sgd_step(params, grads, opt);
  }
  if (train_cfg.validation_selection) {
    checkpoint(train_cfg.iterations);
    fit.net = std::move(best_net);
  }
  return fit;
}

GaussianMixturePredictive mfvi_predict(const MfviNetwork& net, const Matrix& X, int n_samples, Rng& rng) {
  if (n_samples < 1) throw ConfigError("mfvi_predict: n_samples must be >= 1");
  std::vector<Matrix> draws;
  draws.reserve(static_cast<std::size_t>(n_samples));
  for (int s = 0; s < n_samples; ++s) {
    Matrix out = mfvi_forward(net, X, rng).output;
    if (!out.allFinite()) throw NumericError("mfvi_predict: non-finite output");
    draws.push_back(std::move(out));
  }
  return stack_components(draws, net.noise_var());
}

}  // namespace dunal
