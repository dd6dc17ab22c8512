#include <doctest.h>

#include <filesystem>
#include <random>
#include <sstream>

#include "actmon/experiment.hpp"
#include "actmon/io.hpp"
#include "actmon/trace.hpp"
#include "cli.hpp"

using namespace actmon;
namespace fs = std::filesystem;

namespace {

struct Workspace {
  fs::path dir;
  Workspace() {
    dir = fs::temp_directory_path() / ("actmon_cli_" + std::to_string(std::random_device{}()));
    fs::create_directories(dir);
  }
  ~Workspace() { fs::remove_all(dir); }
  std::string operator/(const std::string& name) const { return (dir / name).string(); }
};

struct Result {
  int code;
  std::string out, err;
};

Result run(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

void write_traces(const std::string& path, std::size_t n, Index m, std::uint64_t seed,
                  bool labels = false) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> g(0.0f, 1.0f);
  TraceDataset ds(m);
  for (std::size_t i = 0; i < n; ++i) {
    VectorXf v(m);
    for (auto& x : v) x = g(rng);
    ds.add({i, v, labels ? std::optional<std::int32_t>(std::int32_t(i % 2)) : std::nullopt});
  }
  save_trace(ds, path, format_for(path));
}

}  // namespace

TEST_CASE("fit, calibrate and check end to end") {
  Workspace ws;
  write_traces(ws / "train.bin", 600, 64, 1);
  write_traces(ws / "test.bin", 100, 64, 2);

  auto r = run({"fit", "--traces", ws / "train.bin", "--split-index", "500", "--seed", "3",
                "--calibration-out", ws / "cal.bin", "--out", ws / "fit.json"});
  REQUIRE(r.code == 0);
  CHECK(r.out.find("neurons: 64") != std::string::npos);
  CHECK(r.out.find("samples: 500") != std::string::npos);
  CHECK(r.out.find("k: 2.0") != std::string::npos);
  CHECK(r.out.find("mode: class_agnostic") != std::string::npos);

  r = run({"calibrate", "--fit", ws / "fit.json", "--traces", ws / "cal.bin", "--out",
           ws / "monitor.json"});
  REQUIRE(r.code == 0);
  CHECK(r.out.find("calibration scores: 100") != std::string::npos);

  r = run({"check", "--monitor", ws / "monitor.json", "--traces", ws / "test.bin", "--out",
           ws / "v1.jsonl"});
  REQUIRE(r.code == 0);
  CHECK(r.out.rfind("ID: ", 0) == 0);
  const auto comma = r.out.find(", OOD: ");
  REQUIRE(comma != std::string::npos);
  CHECK(std::stoi(r.out.substr(comma + 7)) <= 15);

  const auto before = read_file(ws / "test.bin");
  r = run({"check", "--monitor", ws / "monitor.json", "--traces", ws / "test.bin", "--out",
           ws / "v2.jsonl"});
  CHECK(read_file(ws / "v1.jsonl") == read_file(ws / "v2.jsonl"));
  CHECK(read_file(ws / "test.bin") == before);

  r = run({"check", "--monitor", ws / "monitor.json", "--traces", ws / "test.bin", "--out",
           ws / "v.csv", "--emit", "csv"});
  CHECK(r.code == 0);
  CHECK(read_file(ws / "v.csv").rfind("sample_id,score,p_num,p_den,decision\n", 0) == 0);
}

TEST_CASE("exit codes") {
  Workspace ws;
  write_traces(ws / "t.bin", 50, 64, 1);
  write_traces(ws / "wide.bin", 150, 128, 2);

  CHECK(run({"fit", "--traces", ws / "t.bin", "--k", "0", "--out", ws / "f.json"}).code == 1);
  CHECK(run({"fit", "--traces", ws / "t.bin", "--mode", "nope", "--out", ws / "f.json"}).code ==
        1);
  CHECK(run({}).code == 1);
  CHECK(run({"frobnicate"}).code == 1);

  const auto per_class =
      run({"fit", "--traces", ws / "t.bin", "--mode", "per_class", "--out", ws / "f.json"});
  CHECK(per_class.code == 2);
  CHECK(per_class.err.find("label") != std::string::npos);

  CHECK(run({"fit", "--traces", ws / "missing.bin", "--out", ws / "f.json"}).code == 2);
  write_file_atomic(ws / "garbage.bin", "ATRCxx");
  CHECK(run({"fit", "--traces", ws / "garbage.bin", "--out", ws / "f.json"}).code == 2);

  REQUIRE(run({"fit", "--traces", ws / "wide.bin", "--split-index", "100", "--calibration-out",
               ws / "wcal.bin", "--out", ws / "wfit.json"})
              .code == 0);
  REQUIRE(run({"calibrate", "--fit", ws / "wfit.json", "--traces", ws / "wcal.bin", "--out",
               ws / "wide.json"})
              .code == 0);
  CHECK(run({"check", "--monitor", ws / "wide.json", "--traces", ws / "t.bin", "--out",
             ws / "v.jsonl"})
            .code == 2);
  CHECK_FALSE(fs::exists(ws / "v.jsonl"));
}

TEST_CASE("per-class fit on labeled csv traces") {
  Workspace ws;
  write_traces(ws / "l.csv", 40, 4, 5, true);
  const auto r = run({"fit", "--traces", ws / "l.csv", "--mode", "per_class", "--out",
                      ws / "f.json"});
  CHECK(r.code == 0);
  CHECK(r.out.find("classes: 0 1") != std::string::npos);
}

TEST_CASE("perturb subcommand") {
  Workspace ws;
  TraceDataset images(16);
  for (std::uint64_t i = 0; i < 3; ++i) images.add({i, VectorXf::Constant(16, 0.5f), std::nullopt});
  save_trace(images, ws / "img.bin", TraceFormat::Binary);
  CHECK(run({"perturb", "--kind", "impulse", "--level", "1", "--seed", "1", "--in",
             ws / "img.bin", "--out", ws / "out.bin"})
            .code == 0);
  const auto out = load_trace(ws / "out.bin", TraceFormat::Binary);
  CHECK(((out[0].activations.array() == 0.0f) || (out[0].activations.array() == 1.0f)).all());
  CHECK(run({"perturb", "--kind", "fgsm", "--level", "0.02", "--seed", "1", "--in",
             ws / "img.bin", "--out", ws / "out.bin"})
            .code == 1);
  CHECK(run({"perturb", "--kind", "gaussian", "--level", "-1", "--seed", "1", "--in",
             ws / "img.bin", "--out", ws / "out.bin"})
            .code == 1);
}

TEST_CASE("experiment and report subcommands") {
  Workspace ws;
  auto plan = default_plan();
  plan.n_proper = 60;
  plan.n_calibration = 20;
  plan.n_test = 10;
  plan.n_foreign = 10;
  plan.calibration_sizes = {};
  write_file_atomic(ws / "plan.json", plan_to_json(plan));
  auto r = run({"experiment", "--plan", ws / "plan.json", "--out", ws / "report.json"});
  REQUIRE(r.code == 0);
  CHECK(r.out.find("foreign: ") != std::string::npos);

  r = run({"report", "--experiment", ws / "report.json", "--out-dir", ws / "out"});
  REQUIRE(r.code == 0);
  std::size_t files = 0;
  for (const auto& e : fs::directory_iterator(ws.dir / "out")) {
    (void)e;
    ++files;
  }
  CHECK(files == 1 + plan.sweep.size() + 2);

  write_file_atomic(ws / "bad.json", "{\"metadata\": {}, \"conditions\": 3}");
  CHECK(run({"report", "--experiment", ws / "bad.json", "--out-dir", ws / "out2"}).code == 2);
}
