#include <doctest.h>

#include "actmon/error.hpp"
#include "actmon/network.hpp"
#include "oracles.hpp"

using namespace actmon;

namespace {

Network<double> single_neuron() {
  DenseLayer<double> d{(MatrixXd(1, 2) << 1.0, 1.0).finished(), VectorXd::Zero(1)};
  return Network<double>(Shape{2}, {d, LeakyReluLayer{}});
}

}  // namespace

TEST_CASE("leaky relu branches") {
  CHECK(leaky_relu(2.0) == 2.0);
  CHECK(leaky_relu(-1.0) == doctest::Approx(-0.01));
  CHECK(leaky_relu(0.0) == 0.0);
  CHECK(leaky_relu_slope(0.0) == kLeakySlope);
  CHECK(leaky_relu_slope(1e-12) == 1.0);
}

TEST_CASE("single dense neuron with leaky relu") {
  const auto net = single_neuron();
  CHECK(forward(net, Eigen::Vector2d(1, 2))[0] == doctest::Approx(3.0));
  CHECK(forward(net, Eigen::Vector2d(-1, -2))[0] == doctest::Approx(-0.03));
}

TEST_CASE("identity batchnorm with zero epsilon passes input through") {
  BatchNormLayer<double> bn{VectorXd::Ones(3), VectorXd::Zero(3), VectorXd::Zero(3),
                            VectorXd::Ones(3), 0.0};
  Network<double> net(Shape{3}, {bn});
  const Eigen::Vector3d x(0.3, -2.0, 7.5);
  CHECK(forward(net, x) == x);
}

TEST_CASE("batchnorm with zero variance and zero epsilon is rejected") {
  BatchNormLayer<double> bn{VectorXd::Ones(2), VectorXd::Zero(2), VectorXd::Zero(2),
                            VectorXd::Zero(2), 0.0};
  CHECK_THROWS_AS(Network<double>(Shape{2}, {bn}), ValidationError);
}

TEST_CASE("conv2d valid padding by hand") {
  Conv2dLayer<double> c{(MatrixXd(2, 2) << 1, 0, 0, -1).finished(), 0.5};
  Network<double> net(Shape{3, 3}, {c});
  // Row-major 3x3 input 0..8.
  VectorXd x(9);
  for (int i = 0; i < 9; ++i) x[i] = i;
  const auto y = forward(net, x);
  REQUIRE(y.size() == 4);
  CHECK(net.output_shape() == Shape{2, 2});
  // x[r][c] - x[r+1][c+1] + 0.5 = -4 + 0.5 everywhere.
  for (int i = 0; i < 4; ++i) CHECK(y[i] == doctest::Approx(-3.5));
}

TEST_CASE("shape mismatches are reported at construction and call time") {
  DenseLayer<double> d{MatrixXd::Ones(2, 3), VectorXd::Zero(2)};
  CHECK_THROWS_AS(Network<double>(Shape{4}, {d}), ValidationError);
  Network<double> net(Shape{3}, {d});
  CHECK_THROWS_AS(forward(net, VectorXd::Zero(4)), ValidationError);
  CHECK_THROWS_AS(input_gradient(net, VectorXd::Zero(3), VectorXd::Zero(3)), ValidationError);
}

TEST_CASE("trace layout") {
  const auto net = oracle::random_network(5);
  const VectorXd x = VectorXd::Constant(net.input_shape().size(), 0.4);
  const auto r = forward_with_trace(net, x);
  CHECK(r.trace.size() == net.depth() + 1);
  CHECK(r.trace.front() == x);
  CHECK(r.trace.back() == forward(net, x));
  CHECK(r.output == r.trace.back());

  DenseLayer<double> d{MatrixXd::Ones(2, 2), VectorXd::Zero(2)};
  Network<double> three(Shape{2}, {d, LeakyReluLayer{}, d});
  CHECK(forward_with_trace(three, Eigen::Vector2d(1, 1)).trace.size() == 4);
}

TEST_CASE("gradient of a linear layer has the closed form 2 W^T (Wx - t)") {
  MatrixXd w(2, 3);
  w << 1, -2, 0.5, 0.25, 3, -1;
  Network<double> net(Shape{3}, {DenseLayer<double>{w, VectorXd::Zero(2)}});
  const Eigen::Vector3d x(0.2, -0.7, 1.1);
  const Eigen::Vector2d t(0.5, -0.25);
  const VectorXd expected = 2.0 * w.transpose() * (w * x - t);
  CHECK((input_gradient(net, x, t) - expected).norm() < 1e-12);
  CHECK(input_gradient(net, x, w * x).norm() == 0.0);
}

TEST_CASE("reverse mode matches central differences on random networks") {
  int checked = 0;
  for (std::uint64_t seed = 1; seed <= 30; ++seed) {
    const auto net = oracle::random_network(seed);
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    VectorXd x(net.input_shape().size());
    for (auto& v : x) v = u(rng);
    if (oracle::min_relu_margin(net, x) < 1e-3) continue;
    VectorXd t(net.output_shape().size());
    for (auto& v : t) v = u(rng);
    const VectorXd g = input_gradient(net, x, t);
    const VectorXd n = oracle::numeric_gradient(net, x, t);
    CHECK((g - n).norm() / std::max(n.norm(), 1e-12) < 1e-4);
    ++checked;
  }
  CHECK(checked >= 20);
}

TEST_CASE("float and double networks agree") {
  const auto net = oracle::random_network(11);
  const auto netf = net.cast<float>();
  const VectorXd x = VectorXd::Constant(net.input_shape().size(), 0.3);
  const VectorXd yd = forward(net, x);
  const VectorXd yf = forward(netf, x.cast<float>()).cast<double>();
  CHECK((yd - yf).norm() < 1e-4 * std::max(1.0, yd.norm()));
}

TEST_CASE("init_network shapes, ranges and determinism") {
  Architecture arch{Shape{4}, {{LayerKind::Dense, 3, {}}}};
  const auto a = init_network(arch, 9);
  const auto b = init_network(arch, 9);
  CHECK(network_to_json(a) == network_to_json(b));
  const auto& d = std::get<DenseLayer<double>>(a.layers()[0]);
  CHECK(d.weights.rows() == 3);
  CHECK(d.weights.cols() == 4);
  CHECK(d.weights.cwiseAbs().maxCoeff() <= 0.5);
  CHECK(d.bias.cwiseAbs().maxCoeff() <= 0.5);
  CHECK_FALSE(network_to_json(init_network(arch, 10)) == network_to_json(a));
}

TEST_CASE("network json round trip is exact") {
  const auto net = oracle::random_network(3);
  const auto back = network_from_json(network_to_json(net));
  const VectorXd x = VectorXd::Constant(net.input_shape().size(), 0.7);
  CHECK(forward(back, x) == forward(net, x));
  CHECK(network_to_json(back) == network_to_json(net));
}

TEST_CASE("batchnorm statistics estimation normalizes the inputs") {
  Architecture arch{Shape{2}, {{LayerKind::BatchNorm}}};
  auto net = init_network(arch, 1);
  auto& bn = std::get<BatchNormLayer<double>>(net.mutable_layer(0));
  bn.gamma.setOnes();
  bn.beta.setZero();
  std::vector<VectorXd> inputs{Eigen::Vector2d(1, 10), Eigen::Vector2d(3, 10)};
  estimate_batchnorm_statistics(net, inputs);
  const auto& est = std::get<BatchNormLayer<double>>(net.layers()[0]);
  CHECK(est.running_mean[0] == doctest::Approx(2.0));
  CHECK(est.running_var[0] == doctest::Approx(1.0));
  CHECK(est.running_var[1] == 0.0);
}
