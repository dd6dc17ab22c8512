#include <doctest.h>

#include <filesystem>
#include <random>

#include "actmon/error.hpp"
#include "actmon/io.hpp"
#include "actmon/monitor.hpp"
#include "actmon/parallel.hpp"

using namespace actmon;

namespace {

TraceDataset gaussian_traces(std::uint64_t seed, std::size_t n, Index m, std::uint64_t first,
                             float shift = 0.0f) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> g(0.0f, 1.0f);
  TraceDataset ds(m);
  for (std::size_t i = 0; i < n; ++i) {
    VectorXf v(m);
    for (auto& x : v) x = g(rng) + shift;
    ds.add({first + i, v, std::nullopt});
  }
  return ds;
}

MonitorArtifact standard_monitor() {
  return build_monitor(gaussian_traces(1, 500, 16, 0), gaussian_traces(2, 100, 16, 500),
                       MonitorConfig{}, {}, "test");
}

/// Monitor whose calibration scores are fixed by hand.
MonitorArtifact handmade(std::vector<double> scores, double tau) {
  MonitorArtifact m{MonitorConfig{tau},
                    GaussianAbstraction(NeuronStats{VectorXd::Zero(4), VectorXd::Ones(4)}, 2.0),
                    CalibrationScores(std::move(scores)),
                    {}};
  return m;
}

std::filesystem::path temp_path(const std::string& name) {
  return std::filesystem::temp_directory_path() /
         (name + std::to_string(std::random_device{}()) + ".json");
}

}  // namespace

TEST_CASE("500/100 monitor flags few held-out samples") {
  const auto m = standard_monitor();
  CHECK(m.calibration.size() == 100);
  CHECK(m.config.tau == 0.05);
  CHECK(m.abstraction.k() == 2.0);
  const auto batch = check_batch(m, gaussian_traces(3, 100, 16, 1000));
  CHECK(batch.verdicts.size() == 100);
  CHECK(batch.id_count + batch.ood_count == 100);
  CHECK(batch.ood_count <= 15);
}

TEST_CASE("decision is strict at tau") {
  // 100 scores: three at 1.0, two at 0.75, the rest 0.
  std::vector<double> s(100, 0.0);
  s[0] = s[1] = s[2] = 1.0;
  s[3] = s[4] = 0.75;
  const auto m = handmade(s, 0.05);
  const auto v3 = check(m, Eigen::Vector4d::Constant(9.0), 0);
  CHECK(v3.p == PValue{3, 100});
  CHECK(v3.decision == Decision::OutOfDistribution);
  const auto v5 = check(m, Eigen::Vector4d(9, 9, 9, 0), 0);
  CHECK(v5.p == PValue{5, 100});
  CHECK(v5.decision == Decision::InDistribution);
}

TEST_CASE("score above every calibration score gives p zero") {
  const auto m = handmade({0.0, 0.25, 0.5}, 0.05);
  const auto v = check(m, Eigen::Vector4d::Constant(-7.0), 11);
  CHECK(v.p.numerator == 0);
  CHECK(v.decision == Decision::OutOfDistribution);
  CHECK(v.sample_id == 11);
}

TEST_CASE("build_monitor rejects overlapping ids and empty calibration") {
  const auto proper = gaussian_traces(1, 20, 4, 0);
  CHECK_THROWS_AS(build_monitor(proper, gaussian_traces(2, 5, 4, 19), MonitorConfig{}),
                  ValidationError);
  CHECK_THROWS_AS(build_monitor(proper, TraceDataset(4), MonitorConfig{}), ValidationError);
  CHECK_THROWS_AS(build_monitor(proper, gaussian_traces(2, 5, 3, 100), MonitorConfig{}),
                  ValidationError);
}

TEST_CASE("check_batch on empty and mismatched datasets") {
  const auto m = standard_monitor();
  const auto empty = check_batch(m, TraceDataset(16));
  CHECK(empty.verdicts.empty());
  CHECK(empty.id_count == 0);
  CHECK(empty.ood_count == 0);
  CHECK_THROWS_AS(check_batch(m, gaussian_traces(1, 3, 8, 0)), ValidationError);
}

TEST_CASE("verdicts do not depend on the thread count") {
  const auto m = standard_monitor();
  const auto probe = gaussian_traces(5, 300, 16, 2000, 0.5f);
  setenv("ACTMON_THREADS", "1", 1);
  const auto one = verdicts_to_csv(check_batch(m, probe).verdicts);
  setenv("ACTMON_THREADS", "4", 1);
  const auto four = verdicts_to_csv(check_batch(m, probe).verdicts);
  unsetenv("ACTMON_THREADS");
  CHECK(one == four);
}

TEST_CASE("monitor artifact round trip") {
  const auto m = standard_monitor();
  const auto path = temp_path("monitor");
  save_monitor(m, path);
  const auto back = load_monitor(path);
  std::filesystem::remove(path);
  CHECK(back == m);
  const auto probe = gaussian_traces(9, 50, 16, 5000, 1.0f);
  CHECK(verdicts_to_jsonl(check_batch(back, probe).verdicts) ==
        verdicts_to_jsonl(check_batch(m, probe).verdicts));
  CHECK(monitor_to_json(back) == monitor_to_json(m));
}

TEST_CASE("per-class monitor round trip") {
  TraceDataset proper(2), cal(2);
  std::mt19937_64 rng(3);
  std::normal_distribution<float> g(0.0f, 1.0f);
  for (std::uint64_t i = 0; i < 40; ++i) {
    const std::int32_t label = std::int32_t(i % 2);
    VectorXf v(2);
    v << g(rng) + 5.0f * float(label), g(rng);
    (i < 30 ? proper : cal).add({i, v, label});
  }
  MonitorConfig config;
  config.mode = AbstractionMode::PerClass;
  const auto m = build_monitor(proper, cal, config, {}, "test");
  CHECK(monitor_from_json(monitor_to_json(m)) == m);
}

TEST_CASE("wrong schema version and truncated files") {
  const auto text = monitor_to_json(standard_monitor());
  auto bumped = text;
  const auto pos = bumped.find("\"version\": 1");
  REQUIRE(pos != std::string::npos);
  bumped.replace(pos, 12, "\"version\": 2");
  CHECK_THROWS_AS(monitor_from_json(bumped), VersionError);
  CHECK_THROWS_AS(monitor_from_json(text.substr(0, text.size() / 2)), ParseError);
}

TEST_CASE("fitted abstraction round trip and calibration") {
  const auto proper = gaussian_traces(1, 50, 6, 0);
  const auto fitted = fit_monitor(proper, MonitorConfig{});
  CHECK(fitted.proper_ids.size() == 50);
  const auto back = fitted_from_json(fitted_to_json(fitted));
  CHECK(back == fitted);
  const auto cal = gaussian_traces(2, 20, 6, 100);
  const auto m = calibrate_monitor(back, cal, 0.1, "t");
  CHECK(m.config.tau == 0.1);
  CHECK(m == build_monitor(proper, cal, MonitorConfig{0.1}, {}, "t"));
  CHECK_THROWS_AS(calibrate_monitor(back, gaussian_traces(2, 5, 6, 10), 0.05), ValidationError);
  CHECK_THROWS_AS(fitted_from_json(monitor_to_json(m)), ValidationError);
}

TEST_CASE("verdict serializations") {
  const auto m = handmade({0.0, 0.5}, 0.05);
  std::vector<Verdict> v{check(m, Eigen::Vector4d::Zero(), 1),
                         check(m, Eigen::Vector4d::Constant(9), 2)};
  CHECK(verdicts_to_csv(v) ==
        "sample_id,score,p_num,p_den,decision\n1,0,2,2,ID\n2,1,0,2,OOD\n");
  const auto jsonl = verdicts_to_jsonl(v);
  CHECK(std::count(jsonl.begin(), jsonl.end(), '\n') == 2);
}

TEST_CASE("creation timestamp honours SOURCE_DATE_EPOCH") {
  setenv("SOURCE_DATE_EPOCH", "0", 1);
  CHECK(creation_timestamp() == "1970-01-01T00:00:00Z");
  unsetenv("SOURCE_DATE_EPOCH");
}

TEST_CASE("thread count") {
  setenv("ACTMON_THREADS", "3", 1);
  CHECK(thread_count() == 3);
  unsetenv("ACTMON_THREADS");
  CHECK(thread_count() >= 1);
}
