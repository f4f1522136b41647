#include "dunal/gradcheck.hpp"

#include <cmath>
#include <numbers>

#include "dunal/baselines.hpp"
#include "dunal/dun.hpp"

namespace dunal {

namespace {

struct DunProbe {
  Network net;
  Matrix logits;
  DepthDistribution prior;
};

std::vector<ParamRef> param_refs(DunProbe& p) {
  auto refs = p.net.params.refs();
  refs.push_back({&p.logits, "depth_logits", false});
  return refs;
}

Matrix random_matrix(Index r, Index c, double scale, Rng& rng) {
  std::normal_distribution<double> normal(0.0, scale);
  Matrix m(r, c);
  for (Index i = 0; i < r; ++i)
    for (Index j = 0; j < c; ++j) m(i, j) = normal(rng);
  return m;
}

Network random_network(Rng& rng, bool batchnorm, double dropout) {
  std::uniform_int_distribution<int> width(1, 8), depth(0, 3), outs(1, 2);
  std::uniform_real_distribution<double> unit(-0.5, 0.5);
  NetworkConfig cfg;
  cfg.input_dim = width(rng);
  cfg.hidden_dim = width(rng);
  cfg.depth = depth(rng);
  cfg.output_dim = outs(rng);
  cfg.use_batchnorm = batchnorm;
  cfg.dropout_prob = dropout;
  cfg.seed = rng();
  Network net = build_network(cfg);
  for (auto& b : net.params.blocks) {
    b.bias = random_matrix(1, cfg.hidden_dim, 0.5, rng);
    if (batchnorm) {
      b.scale = (Matrix::Ones(1, cfg.hidden_dim) + random_matrix(1, cfg.hidden_dim, 0.3, rng));
      b.shift = random_matrix(1, cfg.hidden_dim, 0.5, rng);
    }
  }
  for (auto& rs : net.running) {
    rs.mean = random_matrix(1, cfg.hidden_dim, 0.5, rng);
    rs.var = (random_matrix(1, cfg.hidden_dim, 0.3, rng).array().abs() + 0.5).matrix();
  }
  net.params.in_bias = random_matrix(1, cfg.hidden_dim, 0.5, rng);
  net.params.out_bias = random_matrix(1, cfg.output_dim, 0.5, rng);
  net.params.log_noise(0, 0) = unit(rng);
  return net;
}

// Weighted Gaussian NLL over every head; exercises the shared output block,
// the residual chain and a caller-routed log_noise gradient.
GradCheckReport check_network(const Network& net, Mode mode, Rng& rng, std::uint64_t mask_seed, double h,
                              double tol) {
  std::uniform_int_distribution<int> rows(2, 5);
  const Index n = rows(rng);
  const Matrix X = random_matrix(n, net.config.input_dim, 1.0, rng);
  const Matrix T = random_matrix(n, net.config.output_dim, 1.0, rng);
  std::vector<double> weight(static_cast<std::size_t>(net.depth()) + 1);
  std::uniform_real_distribution<double> w(0.2, 1.0);
  for (auto& c : weight) c = w(rng);

  auto loss = [&](const Network& m, std::vector<Matrix>* grads) {
    Rng mask_rng(mask_seed);
    const auto fwd = forward_all_depths(m, X, mode, &mask_rng);
    const double s = m.log_noise();
    const double inv_var = std::exp(-2.0 * s);
    double total = 0.0;
    double d_log_noise = 0.0;
    std::vector<Matrix> upstream;
    for (std::size_t i = 0; i < fwd.outputs.size(); ++i) {
      const Matrix r = fwd.outputs[i] - T;
      const double cnt = static_cast<double>(r.size());
      total += weight[i] * (0.5 * cnt * std::log(2.0 * std::numbers::pi) + cnt * s + 0.5 * r.squaredNorm() * inv_var);
      d_log_noise += weight[i] * (cnt - r.squaredNorm() * inv_var);
      upstream.push_back(weight[i] * inv_var * r);
    }
    if (grads != nullptr) {
      Parameters g = backward(m, upstream, fwd.cache);
      g.log_noise(0, 0) = d_log_noise;
      grads->clear();
      for (auto& r : g.refs()) grads->push_back(*r.tensor);
    }
    return total;
  };
  return finite_diff_check(loss, net, h, tol);
}

GradCheckReport check_dun(Rng& rng, double h, double tol) {
  DunProbe probe{random_network(rng, true, 0.0), {}, {}};
  probe.net.config.output_dim = 1;
  probe.net.params.out_weight = random_matrix(probe.net.config.hidden_dim, 1, 0.7, rng);
  probe.net.params.out_bias = random_matrix(1, 1, 0.5, rng);
  const int k = probe.net.depth() + 1;
  probe.logits = random_matrix(1, k, 1.0, rng);
  probe.prior = DepthDistribution::decaying(probe.net.depth(), 0.8);
  std::uniform_int_distribution<int> rows(2, 5);
  const Index n = rows(rng);
  const Samples data{random_matrix(n, probe.net.config.input_dim, 1.0, rng), random_matrix(n, 1, 1.0, rng)};

  auto loss = [&](const DunProbe& p, std::vector<Matrix>* grads) {
    const auto obj = dun_objective(p.net, p.logits, p.prior, data, Mode::eval);
    if (grads != nullptr) {
      Parameters g = obj.grads;
      grads->clear();
      for (auto& r : g.refs()) grads->push_back(*r.tensor);
      grads->push_back(obj.logit_grad);
    }
    return -obj.elbo;
  };
  return finite_diff_check(loss, probe, h, tol);
}

GradCheckReport check_mfvi(Rng& rng, double h, double tol) {
  std::uniform_int_distribution<int> width(1, 6), depth(0, 3), rows(2, 5);
  NetworkConfig nc;
  nc.input_dim = width(rng);
  nc.hidden_dim = width(rng);
  nc.output_dim = 1;
  nc.seed = rng();
  MfviConfig mc;
  mc.depth = depth(rng);
  mc.init_log_std = -1.0;
  mc.prior_std = 0.8;
  MfviNetwork net = build_mfvi_network(nc, mc);
  std::uniform_real_distribution<double> ls(-2.0, -0.5);
  for (auto& r : param_refs(net)) {
    if (r.name.find("log_std") != std::string::npos)
      for (Index i = 0; i < r.tensor->size(); ++i) r.tensor->data()[i] = ls(rng);
    else if (r.name.find("b_mean") != std::string::npos)
      *r.tensor = random_matrix(r.tensor->rows(), r.tensor->cols(), 0.5, rng);
  }
  net.log_noise(0, 0) = 0.2;
  const Index n = rows(rng);
  const Samples data{random_matrix(n, nc.input_dim, 1.0, rng), random_matrix(n, 1, 1.0, rng)};
  const std::uint64_t noise_seed = rng();

  auto loss = [&](const MfviNetwork& m, std::vector<Matrix>* grads) {
    Rng noise(noise_seed);
    auto obj = mfvi_objective(m, data, 2, noise, grads != nullptr);
    if (grads != nullptr) *grads = std::move(obj.grads);
    return -obj.elbo;
  };
  return finite_diff_check(loss, net, h, tol);
}

}  // namespace

GradientSuiteReport run_gradient_suite(int network_trials, std::uint64_t seed, double h, double tolerance) {
  GradientSuiteReport suite;
  Rng rng(seed);
  auto add = [&](std::string label, GradCheckReport r) {
    suite.max_relative_error = std::max(suite.max_relative_error, r.max_relative_error);
    suite.passed = suite.passed && r.passed;
    suite.cases.push_back({std::move(label), std::move(r)});
  };

  for (int t = 0; t < network_trials; ++t) {
    const bool bn = t % 2 == 1;
    Network net = random_network(rng, bn, 0.0);
    add(std::string(bn ? "net+frozen-bn #" : "net #") + std::to_string(t),
        check_network(net, Mode::eval, rng, 0, h, tolerance));
  }
  for (int t = 0; t < 4; ++t) {
    Network net = random_network(rng, false, 0.3);
    add("net+fixed-dropout #" + std::to_string(t), check_network(net, Mode::train, rng, rng(), h, tolerance));
  }
  for (int t = 0; t < 3; ++t) add("dun-elbo #" + std::to_string(t), check_dun(rng, h, tolerance));
  for (int t = 0; t < 3; ++t) add("mfvi-elbo #" + std::to_string(t), check_mfvi(rng, h, tolerance));
  return suite;
}

}  // namespace dunal
