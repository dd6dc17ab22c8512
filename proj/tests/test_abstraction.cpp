#include <doctest.h>

#include <random>

#include "actmon/abstraction.hpp"
#include "actmon/error.hpp"

using namespace actmon;

namespace {

GaussianAbstraction unit_abstraction(Index n, double k = 2.0) {
  return GaussianAbstraction(NeuronStats{VectorXd::Zero(n), VectorXd::Ones(n)}, k);
}

TraceDataset column(std::initializer_list<float> values) {
  TraceDataset ds(1);
  std::uint64_t id = 0;
  for (float v : values) ds.add({id++, VectorXf::Constant(1, v), std::nullopt});
  return ds;
}

}  // namespace

TEST_CASE("fit on {1, 2, 3} gives mu 2 and sigma 1") {
  const auto a = fit(column({1, 2, 3}), AbstractionMode::ClassAgnostic);
  CHECK(a.stats().mu[0] == 2.0);
  CHECK(a.stats().sigma[0] == 1.0);
  CHECK(a.bounds().lower[0] == 0.0);
  CHECK(a.bounds().upper[0] == 4.0);
}

TEST_CASE("constant neuron has zero sigma and a tolerance band") {
  const auto a = fit(column({5, 5, 5}), AbstractionMode::ClassAgnostic);
  CHECK(a.stats().mu[0] == 5.0);
  CHECK(a.stats().sigma[0] == 0.0);
  CHECK(outside_count(a, VectorXf::Constant(1, 5.0f)) == 0);
  CHECK(outside_count(a, VectorXd::Constant(1, 5.0 + 1e-6)) == 1);
}

TEST_CASE("outside fraction by hand") {
  const auto a = unit_abstraction(4);
  CHECK(outside_fraction(a, Eigen::Vector4d(0.5, 3.0, -2.5, 1.0)) == 0.5);
  CHECK(outside_fraction(a, Eigen::Vector4d::Zero()) == 0.0);
  // Closed interval: the boundary itself is inside.
  CHECK(outside_fraction(a, Eigen::Vector4d::Constant(2.0)) == 0.0);
  CHECK(outside_fraction(a, Eigen::Vector4d::Constant(-2.0)) == 0.0);
  CHECK(outside_fraction(a, Eigen::Vector4d::Constant(std::nextafter(2.0, 3.0))) == 1.0);
}

TEST_CASE("percentage check") {
  const auto a = unit_abstraction(4);
  const Eigen::Vector4d half(0.5, 3.0, -2.5, 1.0);
  CHECK(percentage_check(a, half, std::nullopt, 0.4));
  CHECK(percentage_check(a, half, std::nullopt, 0.5));
  CHECK_FALSE(percentage_check(a, half, std::nullopt, 0.6));
  CHECK_FALSE(percentage_check(a, half, std::nullopt, 1.0));
  CHECK(percentage_check(a, Eigen::Vector4d::Zero(), std::nullopt, 1.0));
  CHECK(percentage_check(a, Eigen::Vector4d::Constant(9.0), std::nullopt, 0.0));
  CHECK_THROWS_AS(percentage_check(a, half, std::nullopt, 1.1), InvalidArgument);
}

TEST_CASE("monitored subset restricts the score") {
  GaussianAbstraction a(NeuronStats{VectorXd::Zero(4), VectorXd::Ones(4)}, 2.0, {3, 1, 1});
  CHECK(a.monitored_count() == 2);
  CHECK(a.monitored() == std::vector<Index>{1, 3});
  CHECK(outside_fraction(a, Eigen::Vector4d(9, 9, 9, 0)) == 0.5);
  GaussianAbstraction all(NeuronStats{VectorXd::Zero(2), VectorXd::Ones(2)}, 2.0, {0, 1});
  CHECK(all.monitors_all());
  CHECK_THROWS_AS(
      GaussianAbstraction(NeuronStats{VectorXd::Zero(2), VectorXd::Ones(2)}, 2.0, {2}),
      ValidationError);
}

TEST_CASE("k must be positive and the sample count at least two") {
  CHECK_THROWS_AS(fit(column({1, 2}), AbstractionMode::ClassAgnostic, 0.0), InvalidArgument);
  CHECK_THROWS_AS(fit(column({1}), AbstractionMode::ClassAgnostic), ValidationError);
}

TEST_CASE("per-class fit") {
  TraceDataset ds(1);
  ds.add({0, VectorXf::Constant(1, 1.0f), 0});
  ds.add({1, VectorXf::Constant(1, 3.0f), 0});
  ds.add({2, VectorXf::Constant(1, 10.0f), 1});
  ds.add({3, VectorXf::Constant(1, 14.0f), 1});
  const auto a = fit(ds, AbstractionMode::PerClass);
  CHECK(a.classes() == std::vector<std::int32_t>{0, 1});
  CHECK(a.stats(0).mu[0] == 2.0);
  CHECK(a.stats(1).mu[0] == 12.0);
  CHECK(outside_count(a, VectorXd::Constant(1, 12.0), 1) == 0);
  CHECK(outside_count(a, VectorXd::Constant(1, 12.0), 0) == 1);
  CHECK_THROWS_AS(outside_count(a, VectorXd::Constant(1, 12.0), std::nullopt), ValidationError);
  CHECK_THROWS_AS(outside_count(a, VectorXd::Constant(1, 12.0), 7), ValidationError);

  TraceDataset unlabeled(1);
  unlabeled.add({0, VectorXf::Zero(1), std::nullopt});
  unlabeled.add({1, VectorXf::Ones(1), std::nullopt});
  CHECK_THROWS_AS(fit(unlabeled, AbstractionMode::PerClass), ValidationError);

  ds.add({4, VectorXf::Constant(1, 5.0f), 2});
  CHECK_THROWS_AS(fit(ds, AbstractionMode::PerClass), ValidationError);
}

TEST_CASE("float and double inputs give the same count") {
  std::mt19937_64 rng(4);
  std::normal_distribution<float> n(0.0f, 1.5f);
  const auto a = unit_abstraction(257);
  for (int t = 0; t < 20; ++t) {
    VectorXf x(257);
    for (auto& v : x) v = n(rng);
    CHECK(outside_count(a, x) == outside_count(a, x.cast<double>()));
  }
}

TEST_CASE("two-sigma interval covers about 95.45 percent of Gaussian samples") {
  std::mt19937_64 rng(12);
  std::normal_distribution<double> g(3.0, 0.5);
  TraceDataset ds(16);
  for (std::uint64_t i = 0; i < 5000; ++i) {
    VectorXf v(16);
    for (auto& x : v) x = float(g(rng));
    ds.add({i, v, std::nullopt});
  }
  const auto a = fit(ds, AbstractionMode::ClassAgnostic);
  double inside = 0.0;
  const int trials = 5000;
  for (int t = 0; t < trials; ++t) {
    VectorXf v(16);
    for (auto& x : v) x = float(g(rng));
    inside += 1.0 - outside_fraction(a, v);
  }
  CHECK(std::abs(inside / trials - 0.9545) < 0.01);
}
