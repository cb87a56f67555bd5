#include <cmath>
#include <random>

#include <doctest.h>

#include "depotcast/nn.hpp"
#include "support.hpp"

using namespace depotcast;
using namespace depotcast::nn;

namespace {

Eigen::MatrixXd random_matrix(Eigen::Index r, Eigen::Index c, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Eigen::MatrixXd m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
  return m;
}

NetworkParams random_net(int in, std::vector<int> hidden, int out, Activation act,
                         std::uint64_t seed) {
  Architecture a;
  a.input_width = in;
  a.hidden_widths = std::move(hidden);
  a.hidden_activation = act;
  a.output_width = out;
  auto p = NetworkParams::initialize(a, seed);
  // Non-zero biases so every parameter is exercised.
  std::mt19937_64 rng(seed + 99);
  for (auto& l : p.layers) l.bias = 0.1 * random_matrix(l.bias.size(), 1, rng);
  return p;
}

// Plain loops, no Eigen products.
Eigen::VectorXd oracle_forward(const NetworkParams& p, const Eigen::VectorXd& x) {
  std::vector<double> a(x.data(), x.data() + x.size());
  for (const auto& l : p.layers) {
    std::vector<double> next(static_cast<std::size_t>(l.weight.rows()));
    for (Eigen::Index r = 0; r < l.weight.rows(); ++r) {
      double s = l.bias[r];
      for (Eigen::Index c = 0; c < l.weight.cols(); ++c) s += l.weight(r, c) * a[static_cast<std::size_t>(c)];
      switch (l.activation) {
        case Activation::Relu: s = s > 0.0 ? s : 0.0; break;
        case Activation::Tanh: s = std::tanh(s); break;
        case Activation::Linear: break;
      }
      next[static_cast<std::size_t>(r)] = s;
    }
    a = std::move(next);
  }
  return Eigen::Map<Eigen::VectorXd>(a.data(), static_cast<Eigen::Index>(a.size()));
}

}  // namespace

TEST_CASE("zero parameters give zero output") {
  auto p = random_net(3, {4, 4}, 2, Activation::Relu, 1);
  for (auto& l : p.layers) {
    l.weight.setZero();
    l.bias.setZero();
  }
  const Eigen::VectorXd x = Eigen::VectorXd::Constant(3, 7.0);
  CHECK(forward(p, x).isZero(0.0));
}

TEST_CASE("identity linear layer returns its input") {
  NetworkParams p;
  p.layers.push_back({Eigen::MatrixXd::Identity(3, 3), Eigen::VectorXd::Zero(3), Activation::Linear});
  Eigen::VectorXd x(3);
  x << 1.5, -2.0, 0.25;
  CHECK(forward(p, x) == x);
}

TEST_CASE("forward matches a hand-rolled loop oracle") {
  std::mt19937_64 rng(5);
  for (auto act : {Activation::Relu, Activation::Tanh}) {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      const auto p = random_net(4, {7, 5}, 3, act, seed);
      const auto x = random_matrix(4, 6, rng);
      const auto batch = forward_batch(p, x);
      for (Eigen::Index j = 0; j < x.cols(); ++j) {
        const Eigen::VectorXd want = oracle_forward(p, x.col(j));
        REQUIRE((batch.col(j) - want).cwiseAbs().maxCoeff() < 1e-12);
        REQUIRE((forward(p, x.col(j)) - want).cwiseAbs().maxCoeff() < 1e-12);
      }
    }
  }
}

TEST_CASE("forward rejects wrong input widths") {
  const auto p = random_net(4, {3}, 2, Activation::Relu, 1);
  CHECK_THROWS_AS(forward(p, Eigen::VectorXd::Zero(3)), ShapeError);
  CHECK_THROWS_AS(forward_batch(p, Eigen::MatrixXd::Zero(5, 2)), ShapeError);
}

TEST_CASE("validate enforces chaining, a linear head and finite entries") {
  auto p = random_net(4, {3}, 2, Activation::Relu, 1);
  CHECK_NOTHROW(p.validate());
  auto bad = p;
  bad.layers[1].weight.resize(2, 4);
  CHECK_THROWS_AS(bad.validate(), ShapeError);
  bad = p;
  bad.layers[1].activation = Activation::Relu;
  CHECK_THROWS_AS(bad.validate(), ShapeError);
  bad = p;
  bad.layers[0].bias[0] = std::nan("");
  CHECK_THROWS_AS(bad.validate(), ShapeError);
}

TEST_CASE("initialization is seeded and fan-in scaled") {
  Architecture a;
  a.input_width = 5;
  a.hidden_widths = {64, 64};
  a.output_width = 5;
  const auto p1 = NetworkParams::initialize(a, 42);
  const auto p2 = NetworkParams::initialize(a, 42);
  const auto p3 = NetworkParams::initialize(a, 43);
  CHECK(p1 == p2);
  CHECK_FALSE(p1 == p3);
  CHECK(p1.parameter_count() == 5 * 64 + 64 + 64 * 64 + 64 + 64 * 5 + 5);
  CHECK(p1.layers[0].weight.cwiseAbs().maxCoeff() <= std::sqrt(6.0 / 5));
  CHECK(p1.layers[1].weight.cwiseAbs().maxCoeff() <= std::sqrt(6.0 / 64));
  CHECK(p1.layers[2].weight.cwiseAbs().maxCoeff() <= std::sqrt(3.0 / 64));
  CHECK(p1.layers[0].bias.isZero(0.0));
  a.zero_output_layer = true;
  const auto z = NetworkParams::initialize(a, 42);
  CHECK(z.layers.back().weight.isZero(0.0));
  CHECK(forward(z, Eigen::VectorXd::Zero(5)).isZero(0.0));
}

TEST_CASE("flatten and assign_flat are inverse, row-major per layer") {
  auto p = random_net(2, {3}, 2, Activation::Tanh, 8);
  const auto flat = p.flatten();
  REQUIRE(flat.size() == p.parameter_count());
  CHECK(flat[1] == p.layers[0].weight(0, 1));
  CHECK(flat[2] == p.layers[0].weight(1, 0));
  CHECK(flat[6] == p.layers[0].bias[0]);
  CHECK(p.parameter_name(1) == "layer0.weight[0,1]");
  CHECK(p.parameter_name(6) == "layer0.bias[0]");
  auto q = random_net(2, {3}, 2, Activation::Tanh, 9);
  q.assign_flat(flat);
  CHECK(q == p);
  CHECK_THROWS_AS(q.assign_flat(std::vector<double>(3)), ShapeError);
}

TEST_CASE("zero upstream gradient gives zero gradients") {
  std::mt19937_64 rng(2);
  const auto p = random_net(3, {5, 5}, 2, Activation::Relu, 3);
  const auto g = backward(p, random_matrix(3, 4, rng), Eigen::MatrixXd::Zero(2, 4));
  for (double v : g.flatten()) REQUIRE(v == 0.0);
}

TEST_CASE("single linear layer under squared loss has gradient 2(Wx+b-y)x^T") {
  std::mt19937_64 rng(4);
  NetworkParams p;
  p.layers.push_back({random_matrix(2, 3, rng), random_matrix(2, 1, rng), Activation::Linear});
  const Eigen::VectorXd x = random_matrix(3, 1, rng);
  const Eigen::VectorXd y = random_matrix(2, 1, rng);
  Eigen::MatrixXd upstream;
  sum_squared_error(forward_batch(p, x), y, &upstream);
  const auto g = backward(p, x, upstream);
  const Eigen::VectorXd r = p.layers[0].weight * x + p.layers[0].bias - y;
  const Eigen::MatrixXd want_w = 2.0 * r * x.transpose();
  CHECK((g.layers[0].weight - want_w).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((g.layers[0].bias - 2.0 * r).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("gradient check on a linear model passes at 1e-6") {
  std::mt19937_64 rng(6);
  NetworkParams p;
  p.layers.push_back({random_matrix(2, 4, rng), random_matrix(2, 1, rng), Activation::Linear});
  const auto report = grad_check(p, sum_squared_error, random_matrix(4, 8, rng),
                                 random_matrix(2, 8, rng), 1e-5, 1e-6);
  CHECK(report.passed);
  CHECK(report.max_relative_error < 1e-6);
}

TEST_CASE("gradient check across seeds, widths and activations") {
  for (auto act : {Activation::Relu, Activation::Tanh}) {
    for (int w : {1, 4, 16}) {
      for (std::uint64_t seed = 0; seed < 10; ++seed) {
        std::mt19937_64 rng(seed * 31 + static_cast<std::uint64_t>(w));
        const auto p = random_net(3, {w, w}, 2, act, seed);
        auto x = random_matrix(3, 5, rng);
        while (kink_margin(p, x) < 1e-3) x = random_matrix(3, 5, rng);
        const auto r = grad_check(p, sum_squared_error, x, random_matrix(2, 5, rng));
        REQUIRE_MESSAGE(r.passed, "seed ", seed, " width ", w, " worst ", r.worst_parameter, " ",
                        r.max_relative_error);
      }
    }
  }
}

TEST_CASE("kink_margin reports the closest ReLU pre-activation") {
  Architecture a;
  a.input_width = 1;
  a.hidden_widths = {2};
  a.output_width = 1;
  auto p = NetworkParams::initialize(a, 1);
  p.layers[0].weight << 1.0, -2.0;
  p.layers[0].bias << 0.5, 0.0;
  Eigen::MatrixXd x(1, 2);
  x << 0.1, -1.0;
  CHECK(kink_margin(p, x) == doctest::Approx(0.2));
  p.layers[0].activation = Activation::Tanh;
  CHECK(std::isinf(kink_margin(p, x)));
}

TEST_CASE("a corrupted gradient entry fails the check and is named") {
  std::mt19937_64 rng(7);
  const auto p = random_net(3, {4}, 2, Activation::Tanh, 7);
  const auto x = random_matrix(3, 5, rng);
  const auto y = random_matrix(2, 5, rng);
  Eigen::MatrixXd upstream;
  sum_squared_error(forward_batch(p, x), y, &upstream);
  auto g = backward(p, x, upstream);
  g.layers[0].weight(2, 1) *= 2.0;
  const auto r = grad_check(p, g, sum_squared_error, x, y);
  CHECK_FALSE(r.passed);
  CHECK(r.worst_parameter == "layer0.weight[2,1]");
  CHECK(r.worst_index == 2 * 3 + 1);
}

TEST_CASE("relative error uses a floor for tiny gradients") {
  CHECK(relative_error(1.0, 1.0) == 0.0);
  CHECK(relative_error(2.0, 1.0) == doctest::Approx(0.5));
  CHECK(relative_error(1e-12, 0.0) == doctest::Approx(1e-6));
}

TEST_CASE("scaling the output layer scales the output") {
  std::mt19937_64 rng(9);
  auto p = random_net(3, {6, 6}, 2, Activation::Relu, 11);
  const auto x = random_matrix(3, 4, rng);
  const auto base = forward_batch(p, x);
  p.layers.back().weight *= -2.5;
  p.layers.back().bias *= -2.5;
  CHECK((forward_batch(p, x) - (-2.5) * base).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("backward is linear in the upstream gradient") {
  std::mt19937_64 rng(10);
  const auto p = random_net(3, {6, 6}, 2, Activation::Tanh, 12);
  const auto x = random_matrix(3, 4, rng);
  const auto u1 = random_matrix(2, 4, rng);
  const auto u2 = random_matrix(2, 4, rng);
  auto lhs = backward(p, x, 1.5 * u1 - 0.5 * u2).flatten();
  auto g1 = backward(p, x, u1);
  auto g2 = backward(p, x, u2);
  g1 *= 1.5;
  g2 *= -0.5;
  g1 += g2;
  const auto rhs = g1.flatten();
  for (std::size_t i = 0; i < lhs.size(); ++i) REQUIRE(std::abs(lhs[i] - rhs[i]) < 1e-12);
}

TEST_CASE("backward sums over batch columns") {
  std::mt19937_64 rng(13);
  const auto p = random_net(3, {5}, 2, Activation::Relu, 14);
  const auto x = random_matrix(3, 2, rng);
  const auto u = random_matrix(2, 2, rng);
  auto a = backward(p, x.col(0), u.col(0));
  a += backward(p, x.col(1), u.col(1));
  const auto both = backward(p, x, u).flatten();
  const auto sum = a.flatten();
  for (std::size_t i = 0; i < both.size(); ++i) REQUIRE(std::abs(both[i] - sum[i]) < 1e-12);
}

TEST_CASE("Adam first step moves every coordinate by about alpha") {
  std::mt19937_64 rng(15);
  auto p = random_net(3, {4}, 2, Activation::Relu, 16);
  const auto before = p.flatten();
  OptimizerState opt(p, {1e-2, 0.9, 0.999, 1e-8});
  auto g = Gradients::zeros_like(p);
  for (auto& l : g.layers) {
    l.weight = random_matrix(l.weight.rows(), l.weight.cols(), rng);
    l.bias = random_matrix(l.bias.size(), 1, rng);
  }
  optimizer_step(opt, p, g);
  CHECK(opt.step() == 1);
  const auto after = p.flatten();
  const auto gf = g.flatten();
  for (std::size_t i = 0; i < after.size(); ++i) {
    const double delta = after[i] - before[i];
    REQUIRE(std::abs(std::abs(delta) - 1e-2) < 1e-6);
    REQUIRE(delta * gf[i] < 0.0);
  }
}

TEST_CASE("Adam with zero gradients leaves params and decays moments") {
  std::mt19937_64 rng(17);
  auto p = random_net(2, {3}, 2, Activation::Tanh, 18);
  OptimizerState opt(p, {});
  const auto params = p.flatten();
  optimizer_step(opt, p, Gradients::zeros_like(p));
  CHECK(p.flatten() == params);
  CHECK(opt.step() == 1);

  auto g = Gradients::zeros_like(p);
  for (auto& l : g.layers) l.weight.setConstant(0.5);
  optimizer_step(opt, p, g);
  const auto m1 = opt.first_moment().flatten();
  const auto v1 = opt.second_moment().flatten();
  optimizer_step(opt, p, Gradients::zeros_like(p));
  const auto m2 = opt.first_moment().flatten();
  const auto v2 = opt.second_moment().flatten();
  for (std::size_t i = 0; i < m1.size(); ++i) {
    REQUIRE(m2[i] == doctest::Approx(0.9 * m1[i]));
    REQUIRE(v2[i] == doctest::Approx(0.999 * v1[i]));
  }
}

TEST_CASE("Adam with zero learning rate is the identity on params") {
  std::mt19937_64 rng(19);
  auto p = random_net(2, {3}, 2, Activation::Relu, 20);
  const auto before = p;
  OptimizerState opt(p, {});
  opt.set_learning_rate(0.0);
  auto g = Gradients::zeros_like(p);
  for (auto& l : g.layers) l.weight = random_matrix(l.weight.rows(), l.weight.cols(), rng);
  for (int i = 0; i < 3; ++i) optimizer_step(opt, p, g);
  CHECK(p == before);
}

TEST_CASE("Adam steps are deterministic") {
  std::mt19937_64 rng(21);
  auto p1 = random_net(2, {3}, 2, Activation::Relu, 22);
  auto p2 = p1;
  OptimizerState o1(p1, {});
  OptimizerState o2(p2, {});
  auto g = Gradients::zeros_like(p1);
  for (auto& l : g.layers) l.weight = random_matrix(l.weight.rows(), l.weight.cols(), rng);
  optimizer_step(o1, p1, g);
  optimizer_step(o2, p2, g);
  CHECK(p1 == p2);
  CHECK(o1.first_moment().flatten() == o2.first_moment().flatten());
}

TEST_CASE("non-finite gradients abort the step untouched") {
  auto p = random_net(2, {3}, 2, Activation::Relu, 23);
  const auto before = p;
  OptimizerState opt(p, {});
  auto g = Gradients::zeros_like(p);
  g.layers[1].bias[0] = std::numeric_limits<double>::infinity();
  CHECK_THROWS_AS(optimizer_step(opt, p, g), NonFiniteGradient);
  CHECK(p == before);
  CHECK(opt.step() == 0);
  g.layers[1].bias[0] = std::nan("");
  CHECK_THROWS_AS(optimizer_step(opt, p, g), NonFiniteGradient);
  CHECK_FALSE(g.all_finite());
}

TEST_CASE("invalid optimizer settings are rejected") {
  const auto p = random_net(2, {3}, 2, Activation::Relu, 24);
  CHECK_THROWS(OptimizerState(p, {-1.0, 0.9, 0.999, 1e-8}));
  CHECK_THROWS(OptimizerState(p, {1e-3, 1.0, 0.999, 1e-8}));
  CHECK_THROWS(OptimizerState(p, {1e-3, 0.9, 1.0, 1e-8}));
  CHECK_THROWS(OptimizerState(p, {1e-3, 0.9, 0.999, 0.0}));
}

TEST_CASE("network checkpoints round-trip exactly") {
  const auto p = random_net(5, {16, 8}, 5, Activation::Tanh, 25);
  CHECK(deserialize_network(serialize_network(p)) == p);
  depotcast::testing::TempDir dir;
  save_network(p, dir / "net.json");
  CHECK(load_network(dir / "net.json") == p);
}

TEST_CASE("malformed checkpoints are rejected") {
  const auto p = random_net(2, {3}, 2, Activation::Relu, 26);
  auto text = serialize_network(p);
  CHECK_THROWS(deserialize_network("{}"));
  CHECK_THROWS(deserialize_network("not json"));
  auto wrong_version = text;
  wrong_version.replace(wrong_version.find("\"version\": 1"), 12, "\"version\": 9");
  CHECK_THROWS(deserialize_network(wrong_version));
}

TEST_CASE("activation names") {
  for (auto a : {Activation::Linear, Activation::Relu, Activation::Tanh}) {
    CHECK(parse_activation(to_string(a)) == a);
  }
  CHECK_THROWS(parse_activation("sigmoid"));
}
