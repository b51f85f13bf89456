#include <doctest.h>

#include <cmath>
#include <sstream>

#include "felrl/net.hpp"

using namespace felrl;

namespace {

// Straight-line matrix-algebra oracle, independent of forward_batch.
Eigen::VectorXd forward_oracle(const Net& net, const Eigen::VectorXd& x) {
  Eigen::VectorXd a = x;
  int off = 0;
  for (int l = 0; l < net.num_layers(); ++l) {
    const int ni = net.sizes[l], no = net.sizes[l + 1];
    Eigen::VectorXd z = Eigen::VectorXd::Zero(no);
    for (int j = 0; j < no; ++j) {
      for (int i = 0; i < ni; ++i) z[j] += net.params[off + i * no + j] * a[i];
      z[j] += net.params[off + ni * no + j];
      if (net.acts[l] == Act::Tanh) z[j] = std::tanh(z[j]);
    }
    a = z;
    off += ni * no + no;
  }
  return a;
}

// Analytic gradient of 0.5 * |f(x) - t|^2 wrt params.
Eigen::VectorXd analytic_grad(const Net& net, const Eigen::VectorXd& x,
                              const Eigen::VectorXd& t) {
  ForwardCache cache;
  const Eigen::MatrixXd y = forward_batch(net, x, &cache);
  Eigen::VectorXd grad = Eigen::VectorXd::Zero(net.params.size());
  backward(net, cache, y - t, grad);
  return grad;
}

double loss_at(Net net, const Eigen::VectorXd& params, const Eigen::VectorXd& x,
               const Eigen::VectorXd& t) {
  net.params = params;
  return 0.5 * (forward(net, x) - t).squaredNorm();
}

}  // namespace

TEST_CASE("forward: zero params give zero output") {
  Net net = make_mlp(3, {8, 8}, 2);
  CHECK(forward(net, Eigen::VectorXd::Random(3)).isZero(0.0));
}

TEST_CASE("forward: identity linear layer") {
  Net net = make_net({3, 3}, {Act::Linear});
  auto w = weight_block(net.params, net, 0);
  w.setIdentity();
  const Eigen::VectorXd x = Eigen::VectorXd::Random(3);
  CHECK((forward(net, x) - x).norm() == doctest::Approx(0.0));
}

TEST_CASE("forward: matches independent matrix-algebra oracle") {
  Rng rng(7);
  for (int trial = 0; trial < 5; ++trial) {
    Net net = make_mlp(4, {9, 7}, 3);
    init_fanin(net, rng);
    const Eigen::VectorXd x = rng.normal_vec(4);
    const Eigen::VectorXd got = forward(net, x);
    const Eigen::VectorXd want = forward_oracle(net, x);
    CHECK((got - want).norm() <= 1e-12 * (1.0 + want.norm()));
  }
}

TEST_CASE("forward: dimension mismatch throws") {
  Net net = make_mlp(3, {4}, 2);
  CHECK_THROWS_AS(forward(net, Eigen::VectorXd::Zero(5)), ContractViolation);
}

TEST_CASE("gradient: constant loss is zero") {
  Net net = make_mlp(2, {5}, 3);
  Rng rng(1);
  init_fanin(net, rng);
  ForwardCache cache;
  forward_batch(net, Eigen::VectorXd::Random(2), &cache);
  Eigen::VectorXd grad = Eigen::VectorXd::Zero(net.params.size());
  backward(net, cache, Eigen::MatrixXd::Zero(3, 1), grad);
  CHECK(grad.isZero(0.0));
}

TEST_CASE("gradient: linear regression layer matches hand algebra") {
  // 1-layer linear net, loss = 0.5 |out - y|^2 -> dW = (out - y) x^T, db = out - y
  Net net = make_net({2, 2}, {Act::Linear});
  Rng rng(3);
  init_fanin(net, rng);
  const Eigen::VectorXd x = rng.normal_vec(2);
  const Eigen::VectorXd t = rng.normal_vec(2);
  const Eigen::VectorXd e = forward(net, x) - t;
  const Eigen::VectorXd grad = analytic_grad(net, x, t);
  Net gview = net;
  gview.params = grad;
  const Eigen::MatrixXd gw = weight_block(gview.params, gview, 0);
  CHECK((gw - e * x.transpose()).norm() == doctest::Approx(0.0).epsilon(1e-12));
  CHECK((grad.tail(2) - e).norm() == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("gradient: central finite differences agree") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng(seed);
    Net net = make_mlp(3, {6, 5}, 2);
    init_fanin(net, rng);
    const Eigen::VectorXd x = rng.normal_vec(3);
    const Eigen::VectorXd t = rng.normal_vec(2);
    const Eigen::VectorXd grad = analytic_grad(net, x, t);
    const double h = 1e-5;
    for (int i = 0; i < net.params.size(); ++i) {
      Eigen::VectorXd p = net.params;
      p[i] += h;
      const double up = loss_at(net, p, x, t);
      p[i] -= 2 * h;
      const double dn = loss_at(net, p, x, t);
      const double fd = (up - dn) / (2 * h);
      CHECK(std::abs(grad[i] - fd) <= 1e-4 * std::max(1.0, std::abs(fd)));
    }
  }
}

TEST_CASE("adam: zero gradient leaves params, bumps step") {
  Net net = make_mlp(2, {4}, 1);
  Rng rng(5);
  init_fanin(net, rng);
  const Eigen::VectorXd before = net.params;
  Adam opt = make_adam(net, 1e-3);
  adam_step(net, Eigen::VectorXd::Zero(net.params.size()), opt);
  CHECK(opt.step == 1);
  CHECK((net.params - before).norm() == doctest::Approx(0.0));
}

TEST_CASE("adam: first step moves by about -lr * sign(g)") {
  Net net = make_mlp(2, {4}, 1);
  Rng rng(5);
  init_fanin(net, rng);
  const Eigen::VectorXd before = net.params;
  Adam opt = make_adam(net, 1e-3);
  const Eigen::VectorXd g = rng.normal_vec(net.params.size());
  adam_step(net, g, opt);
  for (int i = 0; i < net.params.size(); ++i) {
    const double delta = net.params[i] - before[i];
    CHECK(delta == doctest::Approx(-1e-3 * (g[i] > 0 ? 1.0 : -1.0)).epsilon(1e-3));
  }
}

TEST_CASE("adam: non-finite gradient diverges loudly") {
  Net net = make_mlp(2, {4}, 1);
  Adam opt = make_adam(net, 1e-3);
  Eigen::VectorXd g = Eigen::VectorXd::Zero(net.params.size());
  g[0] = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(adam_step(net, g, opt), TrainingDivergence);
}

TEST_CASE("adam: quadratic bowl loss decreases") {
  // loss = 0.5 |params|^2, gradient = params
  Net net = make_mlp(1, {3}, 1);
  Rng rng(11);
  init_uniform(net, 0.5, rng);
  Adam opt = make_adam(net, 1e-2);
  double prev = net.params.squaredNorm();
  for (int k = 0; k < 100; ++k) {
    adam_step(net, net.params, opt);
    const double cur = net.params.squaredNorm();
    if (k >= 10) CHECK(cur <= prev + 1e-12);
    prev = cur;
  }
}

TEST_CASE("soft_update cases") {
  Rng rng(2);
  Net online = make_mlp(2, {3}, 1);
  init_fanin(online, rng);
  Net target = make_mlp(2, {3}, 1);

  SUBCASE("tau = 1 copies") {
    soft_update(target, online, 1.0);
    CHECK((target.params - online.params).norm() == doctest::Approx(0.0));
  }
  SUBCASE("tau = 0 leaves target") {
    soft_update(target, online, 0.0);
    CHECK(target.params.isZero(0.0));
  }
  SUBCASE("tau = 0.005 elementwise") {
    online.params.setOnes();
    soft_update(target, online, 0.005);
    CHECK((target.params.array() - 0.005).abs().maxCoeff() == doctest::Approx(0.0));
  }
  SUBCASE("architecture mismatch throws") {
    Net other = make_mlp(2, {4}, 1);
    CHECK_THROWS_AS(soft_update(other, online, 0.5), ContractViolation);
  }
}

TEST_CASE("serialization: bit-exact round trip") {
  Rng rng(13);
  Net net = make_mlp(3, {7, 7}, 2);
  init_fanin(net, rng);
  std::stringstream ss;
  save_net(ss, net);
  const Net back = load_net(ss);
  CHECK(back.sizes == net.sizes);
  const Eigen::VectorXd x = rng.normal_vec(3);
  const Eigen::VectorXd y0 = forward(net, x);
  const Eigen::VectorXd y1 = forward(back, x);
  for (int i = 0; i < y0.size(); ++i) CHECK(y0[i] == y1[i]);  // bit-exact
}

TEST_CASE("determinism: identical seed gives identical trajectories") {
  auto train = [](std::uint64_t seed) {
    Rng rng(seed);
    Net net = make_mlp(2, {6}, 1);
    init_fanin(net, rng);
    Adam opt = make_adam(net, 1e-3);
    for (int k = 0; k < 50; ++k) {
      const Eigen::VectorXd x = rng.normal_vec(2);
      const Eigen::VectorXd t = rng.normal_vec(1);
      ForwardCache cache;
      const Eigen::MatrixXd y = forward_batch(net, x, &cache);
      Eigen::VectorXd grad = Eigen::VectorXd::Zero(net.params.size());
      backward(net, cache, y - t, grad);
      adam_step(net, grad, opt);
    }
    return net.params;
  };
  const Eigen::VectorXd a = train(42), b = train(42);
  for (int i = 0; i < a.size(); ++i) CHECK(a[i] == b[i]);
}
