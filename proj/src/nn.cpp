#include "dunal/nn.hpp"

#include <cmath>

namespace dunal {

namespace {

constexpr double kNormEps = 1e-5;
constexpr double kRunningMomentum = 0.9;

Matrix gaussian_matrix(Index rows, Index cols, double std, Rng& rng) {
  std::normal_distribution<double> normal(0.0, std);
  Matrix m(rows, cols);
  // Fill row-major so the draw order does not depend on storage order.
  for (Index r = 0; r < rows; ++r)
    for (Index c = 0; c < cols; ++c) m(r, c) = normal(rng);
  return m;
}

void require_rng(Rng* rng, const char* what) {
  if (rng == nullptr) throw UsageError(std::string(what) + ": dropout requires an rng");
}

template <class Net>
ForwardResult forward_impl(Net& net, const Matrix& X, Mode mode, Rng* rng,
                           bool update_running) {
  const auto& cfg = net.config;
  if (X.cols() != cfg.input_dim)
    throw ShapeError("forward: expected " + std::to_string(cfg.input_dim) +
                     " input columns, got " + std::to_string(X.cols()));
  if (X.rows() == 0) throw ShapeError("forward: empty input");
  if (!X.allFinite()) throw NumericError("forward: non-finite input");

  const auto& p = net.params;
  const bool batch_stats = mode == Mode::train;
  const bool dropout = mode != Mode::eval && cfg.dropout_prob > 0.0;
  if (dropout) require_rng(rng, "forward");
  if (batch_stats && cfg.use_batchnorm && X.rows() < 2)
    throw ShapeError("forward: batch statistics need at least two rows");

  ForwardResult res;
  auto& cache = res.cache;
  cache.input = X;
  cache.batch_stats = batch_stats;
  cache.activations.reserve(p.blocks.size() + 1);
  cache.blocks.resize(p.blocks.size());

  cache.activations.push_back((X * p.in_weight).rowwise() + p.in_bias.row(0));

  const double n = static_cast<double>(X.rows());
  for (std::size_t i = 0; i < p.blocks.size(); ++i) {
    const auto& blk = p.blocks[i];
    auto& bc = cache.blocks[i];
    const Matrix& prev = cache.activations.back();
    Matrix z = (prev * blk.weight).rowwise() + blk.bias.row(0);

    Matrix u;
    if (cfg.use_batchnorm) {
      RowVector mean, var;
      if (batch_stats) {
        mean = z.colwise().mean();
        var = (z.rowwise() - mean).array().square().colwise().mean();
        if constexpr (!std::is_const_v<Net>) {
          if (update_running) {
            auto& rs = net.running[i];
            const RowVector unbiased = var * (n / std::max(n - 1.0, 1.0));
            rs.mean = kRunningMomentum * rs.mean + (1.0 - kRunningMomentum) * mean;
            rs.var = kRunningMomentum * rs.var + (1.0 - kRunningMomentum) * unbiased;
          }
        }
      } else {
        mean = net.running[i].mean;
        var = net.running[i].var;
      }
      bc.inv_std = (var.array() + kNormEps).rsqrt().matrix();
      bc.normalized = (z.rowwise() - mean).array().rowwise() * bc.inv_std.array();
      u = (bc.normalized.array().rowwise() * blk.scale.row(0).array()).rowwise() +
          blk.shift.row(0).array();
    } else {
      bc.normalized = z;
      u = std::move(z);
    }
    bc.relu_out = u.cwiseMax(0.0);

    Matrix a;
    if (dropout) {
      const double keep = 1.0 - cfg.dropout_prob;
      std::bernoulli_distribution coin(keep);
      bc.dropout.resize(bc.relu_out.rows(), bc.relu_out.cols());
      for (Index r = 0; r < bc.dropout.rows(); ++r)
        for (Index c = 0; c < bc.dropout.cols(); ++c)
          bc.dropout(r, c) = (keep > 0.0 && coin(*rng)) ? 1.0 / keep : 0.0;
      a = prev + bc.relu_out.cwiseProduct(bc.dropout);
    } else {
      a = prev + bc.relu_out;
    }
    cache.activations.push_back(std::move(a));
  }

  res.outputs.reserve(cache.activations.size());
  for (std::size_t i = 0; i < cache.activations.size(); ++i) {
    Matrix y = (cache.activations[i] * p.out_weight).rowwise() + p.out_bias.row(0);
    if (!y.allFinite())
      throw NumericError("forward: non-finite output at depth " + std::to_string(i));
    res.outputs.push_back(std::move(y));
  }
  return res;
}

}  // namespace

void NetworkConfig::validate() const {
  if (input_dim < 1) throw ConfigError("network: input_dim must be >= 1");
  if (hidden_dim < 1) throw ConfigError("network: hidden_dim must be >= 1");
  if (output_dim < 1) throw ConfigError("network: output_dim must be >= 1");
  if (depth < 0) throw ConfigError("network: depth must be >= 0");
  if (!(dropout_prob >= 0.0 && dropout_prob <= 1.0))
    throw ConfigError("network: dropout_prob must lie in [0, 1]");
}

std::vector<ParamRef> Parameters::refs() {
  std::vector<ParamRef> out;
  out.push_back({&in_weight, "in.weight", true});
  out.push_back({&in_bias, "in.bias", true});
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    const std::string tag = "block" + std::to_string(i + 1);
    auto& b = blocks[i];
    out.push_back({&b.weight, tag + ".weight", true});
    out.push_back({&b.bias, tag + ".bias", true});
    if (b.scale.size() > 0) {
      out.push_back({&b.scale, tag + ".scale", false});
      out.push_back({&b.shift, tag + ".shift", false});
    }
  }
  out.push_back({&out_weight, "out.weight", true});
  out.push_back({&out_bias, "out.bias", true});
  out.push_back({&log_noise, "log_noise", false});
  return out;
}

Parameters Parameters::zeros_like() const {
  Parameters z = *this;
  for (auto& r : z.refs()) r.tensor->setZero();
  return z;
}

double Network::noise_var() const { return std::exp(2.0 * log_noise()); }

Network build_network(const NetworkConfig& cfg) {
  cfg.validate();
  Rng rng(cfg.seed);
  Network net;
  net.config = cfg;
  auto& p = net.params;
  const auto in = static_cast<double>(cfg.input_dim);
  const auto h = static_cast<double>(cfg.hidden_dim);

  p.in_weight = gaussian_matrix(cfg.input_dim, cfg.hidden_dim, std::sqrt(2.0 / in), rng);
  p.in_bias = Matrix::Zero(1, cfg.hidden_dim);
  p.blocks.resize(static_cast<std::size_t>(cfg.depth));
  for (auto& b : p.blocks) {
    b.weight = gaussian_matrix(cfg.hidden_dim, cfg.hidden_dim, std::sqrt(2.0 / h), rng);
    b.bias = Matrix::Zero(1, cfg.hidden_dim);
    if (cfg.use_batchnorm) {
      b.scale = Matrix::Ones(1, cfg.hidden_dim);
      b.shift = Matrix::Zero(1, cfg.hidden_dim);
    }
  }
  // Linear head: unit fan-in gain rather than the ReLU gain.
  p.out_weight = gaussian_matrix(cfg.hidden_dim, cfg.output_dim, std::sqrt(1.0 / h), rng);
  p.out_bias = Matrix::Zero(1, cfg.output_dim);
  p.log_noise = Matrix::Zero(1, 1);

  if (cfg.use_batchnorm) {
    net.running.assign(p.blocks.size(), NormStats{RowVector::Zero(cfg.hidden_dim),
                                                  RowVector::Ones(cfg.hidden_dim)});
  }
  return net;
}

ForwardResult forward_all_depths(Network& net, const Matrix& X, Mode mode, Rng* rng) {
  return forward_impl(net, X, mode, rng, true);
}

ForwardResult forward_all_depths(const Network& net, const Matrix& X, Mode mode,
                                 Rng* rng) {
  return forward_impl(net, X, mode, rng, false);
}

Parameters backward(const Network& net, std::span<const Matrix> upstream,
                    const ForwardCache& cache) {
  const auto& p = net.params;
  const std::size_t heads = p.blocks.size() + 1;
  if (cache.empty()) throw UsageError("backward: missing forward cache");
  if (cache.activations.size() != heads || cache.blocks.size() != p.blocks.size() ||
      cache.input.cols() != net.config.input_dim)
    throw UsageError("backward: cache does not belong to this network");
  if (upstream.size() != heads)
    throw ShapeError("backward: expected " + std::to_string(heads) + " upstream gradients");
  const Index n = cache.input.rows();
  for (const auto& g : upstream)
    if (g.rows() != n || g.cols() != net.config.output_dim)
      throw ShapeError("backward: upstream gradient shape mismatch");

  Parameters grads = p.zeros_like();

  // Output head is shared by every depth.
  for (std::size_t i = 0; i < heads; ++i) {
    grads.out_weight.noalias() += cache.activations[i].transpose() * upstream[i];
    grads.out_bias += upstream[i].colwise().sum();
  }

  Matrix g = upstream[heads - 1] * p.out_weight.transpose();  // dL/da_D
  const double nd = static_cast<double>(n);
  for (std::size_t k = p.blocks.size(); k-- > 0;) {
    const auto& blk = p.blocks[k];
    const auto& bc = cache.blocks[k];
    auto& gb = grads.blocks[k];

    Matrix du = bc.dropout.size() > 0 ? Matrix(g.cwiseProduct(bc.dropout)) : g;
    du = (bc.relu_out.array() > 0.0).select(du, 0.0);

    Matrix dz;
    if (net.config.use_batchnorm) {
      gb.scale = du.cwiseProduct(bc.normalized).colwise().sum();
      gb.shift = du.colwise().sum();
      const Matrix dxhat = du.array().rowwise() * blk.scale.row(0).array();
      if (cache.batch_stats) {
        const RowVector sum_d = dxhat.colwise().sum();
        const RowVector sum_dx = dxhat.cwiseProduct(bc.normalized).colwise().sum();
        Matrix t = (nd * dxhat).rowwise() - sum_d;
        t -= (bc.normalized.array().rowwise() * sum_dx.array()).matrix();
        dz = (t.array().rowwise() * (bc.inv_std.array() / nd)).matrix();
      } else {
        dz = (dxhat.array().rowwise() * bc.inv_std.array()).matrix();
      }
    } else {
      dz = std::move(du);
    }

    gb.weight.noalias() = cache.activations[k].transpose() * dz;
    gb.bias = dz.colwise().sum();
    g.noalias() += dz * blk.weight.transpose();
    g.noalias() += upstream[k] * p.out_weight.transpose();
  }

  grads.in_weight.noalias() = cache.input.transpose() * g;
  grads.in_bias = g.colwise().sum();
  return grads;
}

void sgd_step(std::span<const ParamRef> params, std::span<const ParamRef> grads,
              OptimizerState& state) {
  if (params.size() != grads.size())
    throw UsageError("sgd_step: parameter/gradient count mismatch");
  auto& vel = state.velocity;
  if (vel.empty()) {
    vel.reserve(params.size());
    for (const auto& pr : params) vel.push_back(Matrix::Zero(pr.tensor->rows(), pr.tensor->cols()));
  }
  if (vel.size() != params.size()) throw UsageError("sgd_step: velocity count mismatch");

  const auto& c = state.config;
  for (std::size_t i = 0; i < params.size(); ++i) {
    Matrix& p = *params[i].tensor;
    const Matrix& g = *grads[i].tensor;
    if (g.rows() != p.rows() || g.cols() != p.cols() || vel[i].rows() != p.rows() ||
        vel[i].cols() != p.cols())
      throw UsageError("sgd_step: shape mismatch for " + params[i].name);
    if (params[i].decay && c.weight_decay != 0.0)
      vel[i] = c.momentum * vel[i] + g + c.weight_decay * p;
    else
      vel[i] = c.momentum * vel[i] + g;
    p -= c.learning_rate * vel[i];
  }
}

}  // namespace dunal
