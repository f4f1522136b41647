#include "doctest.h"

#include <cmath>

#include "dunal/gradcheck.hpp"
#include "dunal/nn.hpp"

using namespace dunal;

namespace {

NetworkConfig small_cfg(int depth, bool bn = false) {
  NetworkConfig c;
  c.input_dim = 3;
  c.hidden_dim = 4;
  c.depth = depth;
  c.output_dim = 1;
  c.use_batchnorm = bn;
  c.seed = 7;
  return c;
}

bool same_params(Network& a, Network& b) {
  auto ra = a.params.refs();
  auto rb = b.params.refs();
  if (ra.size() != rb.size()) return false;
  for (std::size_t i = 0; i < ra.size(); ++i)
    if (*ra[i].tensor != *rb[i].tensor) return false;
  return true;
}

// Hand-set 1 -> 2 -> 1 network with one residual block.
Network hand_network() {
  NetworkConfig c;
  c.input_dim = 1;
  c.hidden_dim = 2;
  c.depth = 1;
  Network net = build_network(c);
  net.params.in_weight.resize(1, 2);
  net.params.in_weight << 1.0, -1.0;
  net.params.in_bias.resize(1, 2);
  net.params.in_bias << 0.5, 0.0;
  net.params.blocks[0].weight.resize(2, 2);
  net.params.blocks[0].weight << 1.0, 0.0, 0.5, -1.0;
  net.params.blocks[0].bias.resize(1, 2);
  net.params.blocks[0].bias << 0.0, -0.5;
  net.params.out_weight.resize(2, 1);
  net.params.out_weight << 2.0, 1.0;
  net.params.out_bias.resize(1, 1);
  net.params.out_bias << 0.25;
  return net;
}

}  // namespace

TEST_CASE("build_network layout") {
  NetworkConfig c;
  c.input_dim = 1;
  c.depth = 10;
  c.use_batchnorm = true;
  Network net = build_network(c);
  CHECK(net.depth() == 10);
  int affine = 0;
  for (const auto& r : net.params.refs())
    if (r.name.ends_with(".weight")) ++affine;
  CHECK(affine == 12);
  CHECK(net.params.in_weight.cols() == 100);
  CHECK(net.log_noise() == 0.0);
  for (std::size_t i = 0; i < net.params.blocks.size(); ++i) {
    CHECK(net.params.blocks[i].scale.isOnes());
    CHECK(net.params.blocks[i].shift.isZero());
    CHECK(net.running[i].mean.isZero());
    CHECK(net.running[i].var.isOnes());
  }
}

TEST_CASE("build_network rejects invalid configs") {
  NetworkConfig c;
  c.hidden_dim = 0;
  CHECK_THROWS_AS(build_network(c), ConfigError);
  c = NetworkConfig{};
  c.depth = -1;
  CHECK_THROWS_AS(build_network(c), ConfigError);
  c = NetworkConfig{};
  c.dropout_prob = 1.5;
  CHECK_THROWS_AS(build_network(c), ConfigError);
}

TEST_CASE("build_network is deterministic in the seed") {
  Network a = build_network(small_cfg(3));
  Network b = build_network(small_cfg(3));
  CHECK(same_params(a, b));
  auto c = small_cfg(3);
  c.seed = 8;
  Network d = build_network(c);
  CHECK_FALSE(same_params(a, d));
}

TEST_CASE("depth zero yields a single head") {
  Network net = build_network(small_cfg(0));
  const auto fwd = forward_all_depths(net, Matrix::Random(4, 3), Mode::eval);
  CHECK(fwd.outputs.size() == 1);
}

TEST_CASE("forward emits D+1 heads of the right shape") {
  NetworkConfig c;
  c.input_dim = 1;
  c.depth = 10;
  Network net = build_network(c);
  const auto fwd = forward_all_depths(net, Matrix::Random(5, 1), Mode::train);
  REQUIRE(fwd.outputs.size() == 11);
  for (const auto& y : fwd.outputs) {
    CHECK(y.rows() == 5);
    CHECK(y.cols() == 1);
  }
}

TEST_CASE("zero weights give zero outputs") {
  Network net = build_network(small_cfg(3));
  for (auto& r : net.params.refs()) r.tensor->setZero();
  const auto fwd = forward_all_depths(net, Matrix::Random(6, 3), Mode::eval);
  for (const auto& y : fwd.outputs) CHECK(y.isZero(0.0));
}

TEST_CASE("hand-evaluated 1-2-1 residual network") {
  Network net = hand_network();
  Matrix X(2, 1);
  X << 1.0, -2.0;
  const auto fwd = forward_all_depths(net, X, Mode::eval);
  REQUIRE(fwd.outputs.size() == 2);
  // a0 = [1.5, -1], [-1.5, 2]; block relu = [1, 0.5], [0, 0]
  CHECK(fwd.outputs[0](0, 0) == doctest::Approx(2.25).epsilon(1e-15));
  CHECK(fwd.outputs[0](1, 0) == doctest::Approx(-0.75).epsilon(1e-15));
  CHECK(fwd.outputs[1](0, 0) == doctest::Approx(4.75).epsilon(1e-15));
  CHECK(fwd.outputs[1](1, 0) == doctest::Approx(-0.75).epsilon(1e-15));
}

TEST_CASE("residual identity with zeroed blocks") {
  Network net = build_network(small_cfg(4));
  for (auto& b : net.params.blocks) {
    b.weight.setZero();
    b.bias.setZero();
  }
  const auto fwd = forward_all_depths(net, Matrix::Random(5, 3), Mode::eval);
  for (const auto& y : fwd.outputs) CHECK(y == fwd.outputs[0]);
}

TEST_CASE("forward shape and numeric errors") {
  Network net = build_network(small_cfg(2));
  CHECK_THROWS_AS(forward_all_depths(net, Matrix::Random(3, 2), Mode::eval), ShapeError);
  Matrix bad = Matrix::Random(3, 3);
  bad(1, 1) = std::nan("");
  CHECK_THROWS_AS(forward_all_depths(net, bad, Mode::eval), NumericError);

  net.params.out_weight(0, 0) = std::numeric_limits<double>::infinity();
  try {
    forward_all_depths(net, Matrix::Random(3, 3), Mode::eval);
    FAIL("expected numeric error");
  } catch (const NumericError& e) {
    CHECK(std::string(e.what()).find("depth 0") != std::string::npos);
  }
}

TEST_CASE("train mode updates running statistics, eval mode does not") {
  Network net = build_network(small_cfg(2, true));
  const Matrix X = Matrix::Random(8, 3);
  forward_all_depths(net, X, Mode::eval);
  CHECK(net.running[0].mean.isZero());
  forward_all_depths(net, X, Mode::train);
  CHECK_FALSE(net.running[0].mean.isZero());

  const Network& frozen = net;
  const RowVector before = net.running[1].mean;
  forward_all_depths(frozen, X, Mode::train);
  CHECK(net.running[1].mean == before);
}

TEST_CASE("dropout needs an rng and is off in eval mode") {
  auto c = small_cfg(2);
  c.dropout_prob = 0.5;
  Network net = build_network(c);
  const Matrix X = Matrix::Random(4, 3);
  CHECK_THROWS_AS(forward_all_depths(net, X, Mode::train), UsageError);
  const auto a = forward_all_depths(net, X, Mode::eval);
  const auto b = forward_all_depths(net, X, Mode::eval);
  CHECK(a.outputs.back() == b.outputs.back());
  Rng r1(3), r2(3);
  const auto s1 = forward_all_depths(net, X, Mode::sample, &r1);
  const auto s2 = forward_all_depths(net, X, Mode::sample, &r2);
  CHECK(s1.outputs.back() == s2.outputs.back());
}

TEST_CASE("backward: zero upstream gives zero gradients") {
  Network net = build_network(small_cfg(3, true));
  const auto fwd = forward_all_depths(net, Matrix::Random(5, 3), Mode::train);
  std::vector<Matrix> up(4, Matrix::Zero(5, 1));
  Parameters g = backward(net, up, fwd.cache);
  for (auto& r : g.refs()) CHECK(r.tensor->isZero(0.0));
}

TEST_CASE("backward: blocks above the last nonzero head get no gradient") {
  Network net = build_network(small_cfg(4));
  const auto fwd = forward_all_depths(net, Matrix::Random(5, 3), Mode::train);
  std::vector<Matrix> up(5, Matrix::Zero(5, 1));
  up[0] = Matrix::Random(5, 1);
  up[1] = Matrix::Random(5, 1);
  Parameters g = backward(net, up, fwd.cache);
  CHECK_FALSE(g.blocks[0].weight.isZero(0.0));
  for (std::size_t j = 1; j < g.blocks.size(); ++j) {
    // block index j computes a_{j+1}, so heads <= j never see it
    CHECK(g.blocks[j].weight.isZero(0.0));
    CHECK(g.blocks[j].bias.isZero(0.0));
  }
}

TEST_CASE("backward usage errors") {
  Network net = build_network(small_cfg(2));
  ForwardCache empty;
  std::vector<Matrix> up(3, Matrix::Zero(2, 1));
  CHECK_THROWS_AS(backward(net, up, empty), UsageError);
  Network other = build_network(small_cfg(3));
  const auto fwd = forward_all_depths(other, Matrix::Random(2, 3), Mode::train);
  CHECK_THROWS_AS(backward(net, up, fwd.cache), UsageError);
}

TEST_CASE("sum-of-heads loss matches central differences") {
  Rng rng(11);
  for (int trial = 0; trial < 5; ++trial) {
    NetworkConfig c;
    c.input_dim = 1 + trial % 4;
    c.hidden_dim = 2 + trial % 3;
    c.depth = trial % 4;
    c.seed = 100 + trial;
    Network net = build_network(c);
    const Matrix X = Matrix::Random(3, c.input_dim);
    auto loss = [&](const Network& m, std::vector<Matrix>* grads) {
      const auto fwd = forward_all_depths(m, X, Mode::eval);
      double s = 0.0;
      for (const auto& y : fwd.outputs) s += y.sum();
      if (grads) {
        std::vector<Matrix> up(fwd.outputs.size(), Matrix::Ones(3, 1));
        Parameters g = backward(m, up, fwd.cache);
        grads->clear();
        for (auto& r : g.refs()) grads->push_back(*r.tensor);
      }
      return s;
    };
    const auto rep = finite_diff_check(loss, net, 1e-5, 1e-4);
    CHECK(rep.max_relative_error < 1e-4);
  }
}

TEST_CASE("finite_diff_check on a quadratic loss and a zero loss") {
  NetworkConfig c;
  c.input_dim = 2;
  c.hidden_dim = 3;
  c.depth = 0;
  c.seed = 5;
  Network net = build_network(c);
  const Matrix X = Matrix::Random(4, 2);
  const Matrix T = Matrix::Random(4, 1);
  auto quad = [&](const Network& m, std::vector<Matrix>* grads) {
    const auto fwd = forward_all_depths(m, X, Mode::eval);
    const Matrix r = fwd.outputs[0] - T;
    if (grads) {
      std::vector<Matrix> up{r};
      Parameters g = backward(m, up, fwd.cache);
      grads->clear();
      for (auto& ref : g.refs()) grads->push_back(*ref.tensor);
    }
    return 0.5 * r.squaredNorm();
  };
  CHECK(finite_diff_check(quad, net, 1e-5, 1e-6).max_relative_error < 1e-6);

  auto zero = [&](const Network& m, std::vector<Matrix>* grads) {
    if (grads) {
      grads->clear();
      for (auto& ref : m.params.zeros_like().refs()) grads->push_back(*ref.tensor);
    }
    return 0.0;
  };
  const auto rep = finite_diff_check(zero, net, 1e-5, 1e-6);
  CHECK(rep.max_relative_error == 0.0);
  CHECK(rep.passed);
}

TEST_CASE("train-mode batchnorm gradients match central differences") {
  // Batch statistics make biases before a norm layer gradient-free, so compare
  // with an absolute floor rather than the relative criterion.
  Rng rng(21);
  for (int trial = 0; trial < 4; ++trial) {
    NetworkConfig c;
    c.input_dim = 2;
    c.hidden_dim = 3;
    c.depth = 2;
    c.use_batchnorm = true;
    c.seed = 40 + trial;
    const Network net = build_network(c);
    const Matrix X = Matrix::Random(5, 2);
    const Matrix T = Matrix::Random(5, 1);
    auto loss = [&](const Network& m, Parameters* g) {
      const auto fwd = forward_all_depths(m, X, Mode::train);
      std::vector<Matrix> up;
      double s = 0.0;
      for (std::size_t i = 0; i < fwd.outputs.size(); ++i) {
        const Matrix r = fwd.outputs[i] - T;
        s += 0.5 * (i + 1.0) * r.squaredNorm();
        up.push_back((i + 1.0) * r);
      }
      if (g) *g = backward(m, up, fwd.cache);
      return s;
    };
    Parameters analytic;
    loss(net, &analytic);
    Network probe = net;
    auto refs = probe.params.refs();
    auto arefs = analytic.refs();
    for (std::size_t t = 0; t < refs.size(); ++t) {
      for (Index k = 0; k < refs[t].tensor->size(); ++k) {
        double& v = refs[t].tensor->data()[k];
        const double saved = v;
        v = saved + 1e-5;
        const double up = loss(probe, nullptr);
        v = saved - 1e-5;
        const double down = loss(probe, nullptr);
        v = saved;
        const double fd = (up - down) / 2e-5;
        const double a = arefs[t].tensor->data()[k];
        CHECK(std::abs(a - fd) <= 1e-6 + 1e-5 * std::abs(fd));
      }
    }
  }
}

TEST_CASE("randomised gradient suite") {
  const auto suite = run_gradient_suite(20, 2024);
  CHECK(suite.cases.size() >= 20);
  for (const auto& c : suite.cases) {
    INFO(c.label << " worst=" << c.report.worst_tensor);
    CHECK(c.report.max_relative_error < 1e-4);
  }
}

TEST_CASE("sgd_step update rule") {
  Matrix p = Matrix::Constant(1, 1, 1.0);
  Matrix g = Matrix::Constant(1, 1, 1.0);
  std::vector<ParamRef> pr{{&p, "p", true}}, gr{{&g, "p", true}};

  OptimizerState plain{{0.1, 0.0, 0.0}, {}};
  sgd_step(pr, gr, plain);
  CHECK(p(0, 0) == doctest::Approx(0.9).epsilon(1e-15));

  p(0, 0) = 1.0;
  OptimizerState heavy{{0.1, 0.9, 0.0}, {}};
  sgd_step(pr, gr, heavy);
  sgd_step(pr, gr, heavy);
  CHECK(p(0, 0) == doctest::Approx(0.71).epsilon(1e-14));

  p(0, 0) = 1.0;
  g(0, 0) = 0.0;
  OptimizerState decay{{1e-4, 0.0, 1e-5}, {}};
  sgd_step(pr, gr, decay);
  CHECK(std::abs(p(0, 0) - (1.0 - 1e-9)) < 1e-16);
}

TEST_CASE("sgd_step excludes norm parameters and log_noise from decay") {
  Network net = build_network(small_cfg(1, true));
  Parameters zero = net.params.zeros_like();
  const Matrix scale = net.params.blocks[0].scale;
  const Matrix noise = net.params.log_noise;
  const Matrix w = net.params.blocks[0].weight;
  OptimizerState st{{0.1, 0.0, 0.5}, {}};
  sgd_step(net.params.refs(), zero.refs(), st);
  CHECK(net.params.blocks[0].scale == scale);
  CHECK(net.params.log_noise == noise);
  CHECK(net.params.blocks[0].weight.isApprox(w * 0.95));
}

TEST_CASE("sgd_step with zero momentum and decay is plain gradient descent") {
  Network net = build_network(small_cfg(2));
  Network ref = net;
  Parameters g = net.params.zeros_like();
  for (auto& r : g.refs()) r.tensor->setRandom();
  OptimizerState st{{0.05, 0.0, 0.0}, {}};
  sgd_step(net.params.refs(), g.refs(), st);
  auto a = net.params.refs();
  auto b = ref.params.refs();
  auto gr = g.refs();
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(*a[i].tensor == *b[i].tensor - 0.05 * *gr[i].tensor);
}

TEST_CASE("sgd_step shape mismatch") {
  Matrix p = Matrix::Zero(2, 2), g = Matrix::Zero(2, 3);
  std::vector<ParamRef> pr{{&p, "p", true}}, gr{{&g, "g", true}};
  OptimizerState st;
  CHECK_THROWS_AS(sgd_step(pr, gr, st), UsageError);
}

TEST_CASE("forward and backward are bitwise deterministic") {
  auto run = [] {
    Network net = build_network(small_cfg(3, true));
    Rng rng(1);
    const Matrix X = Matrix::Ones(6, 3) * 0.3 + Matrix::Identity(6, 3);
    const auto fwd = forward_all_depths(net, X, Mode::train, &rng);
    std::vector<Matrix> up(fwd.outputs.size(), Matrix::Ones(6, 1));
    return backward(net, up, fwd.cache);
  };
  Parameters a = run(), b = run();
  auto ra = a.refs(), rb = b.refs();
  for (std::size_t i = 0; i < ra.size(); ++i) CHECK(*ra[i].tensor == *rb[i].tensor);
}
