#include "actmon/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include "actmon/monitor.hpp"
#include "actmon/parallel.hpp"
#include "actmon/trace.hpp"
#include "json_codec.hpp"

namespace actmon {

using json_codec::json;

namespace {

std::string format_level(double level) {
  std::ostringstream os;
  os << level;
  return os.str();
}

void add_components(VectorXd& image, const Shape& shape, int count, double amplitude,
                    const InputGenerator& gen, std::mt19937_64& rng) {
  std::uniform_int_distribution<int> freq(gen.min_frequency, gen.max_frequency);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double two_pi = 2.0 * std::numbers::pi;
  for (int c = 0; c < count; ++c) {
    const double fy = freq(rng), fx = freq(rng);
    const double phase = two_pi * unit(rng);
    const double weight = amplitude * (0.5 + unit(rng)) / count;
    for (Index r = 0; r < shape.rows; ++r) {
      for (Index col = 0; col < shape.cols; ++col) {
        const double t = two_pi * (fy * double(r) / double(shape.rows) +
                                   fx * double(col) / double(shape.cols));
        image[r * shape.cols + col] += weight * std::cos(t + phase);
      }
    }
  }
}

}  // namespace

VectorXd generate_input(const InputGenerator& gen, const Shape& shape, std::mt19937_64& rng) {
  VectorXd image = VectorXd::Constant(shape.size(), gen.mean);
  if (gen.scene_components > 0) {
    std::mt19937_64 scene_rng(gen.scene_seed);
    add_components(image, shape, gen.scene_components, gen.scene_amplitude, gen, scene_rng);
  }
  add_components(image, shape, gen.components, gen.amplitude, gen, rng);
  if (gen.gain != 1.0) image = ((image.array() - 0.5) * gen.gain + 0.5).matrix();
  if (gen.noise_std > 0.0) {
    std::normal_distribution<double> noise(0.0, gen.noise_std);
    for (auto& v : image) v += noise(rng);
  }
  return image.cwiseMax(0.0).cwiseMin(1.0);
}

std::size_t last_layer_of_kind(const Architecture& arch, LayerKind kind) {
  for (std::size_t l = arch.layers.size(); l-- > 0;) {
    if (arch.layers[l].kind == kind) return l;
  }
  throw InvalidArgument("architecture has no " + std::string(to_string(kind)) + " layer");
}

ExperimentPlan default_plan() {
  ExperimentPlan plan;
  plan.architecture.input_shape = Shape{16, 16};
  using K = LayerKind;
  plan.architecture.layers = {
      {K::Conv2d, 0, {3, 3}}, {K::BatchNorm}, {K::LeakyRelu},
      {K::Conv2d, 0, {3, 3}}, {K::BatchNorm}, {K::LeakyRelu},
      {K::Dense, 64, {}},     {K::BatchNorm}, {K::LeakyRelu},
      {K::Dense, 10, {}},
  };
  plan.monitored_layer = last_layer_of_kind(plan.architecture, K::BatchNorm);
  plan.network_seed = 3;
  plan.data_seed = 103;

  // Both distributions share the generator settings and differ in the scene.
  plan.id_inputs = InputGenerator{0.5, 0.2, 3, 0, 3, 0.01, 2.5, 7, 4, 1.0};
  plan.foreign_inputs = plan.id_inputs;
  plan.foreign_inputs.scene_seed = 8;

  using P = PerturbationKind;
  plan.sweep = {
      {P::Gaussian, 0.02, 101}, {P::Gaussian, 0.04, 102}, {P::Gaussian, 0.06, 103},
      {P::Impulse, 0.03, 201},  {P::Impulse, 0.06, 202},  {P::Fgsm, 0.02, 301},
      {P::Fgsm, 0.04, 302},     {P::Fgsm, 0.06, 303},
  };
  plan.calibration_sizes = {20, 60, 100};
  return plan;
}

void validate_plan(const ExperimentPlan& plan) {
  const auto fail = [](const std::string& msg) { throw InvalidArgument("invalid plan: " + msg); };
  if (plan.n_proper < 2) fail("n_proper must be >= 2");
  if (plan.n_calibration < 1) fail("n_calibration must be >= 1");
  if (plan.sweep.empty()) fail("perturbation sweep is empty");
  if (plan.monitored_layer >= plan.architecture.layers.size()) {
    fail("monitored_layer " + std::to_string(plan.monitored_layer) + " is out of range");
  }
  if (plan.histogram_bins < 1) fail("histogram_bins must be >= 1");
  if (!(plan.tau >= 0.0 && plan.tau <= 1.0)) fail("tau must lie in [0, 1]");
  if (!(plan.k > 0.0)) fail("k must be > 0");
  for (const auto s : plan.calibration_sizes) {
    if (s < 1 || s > plan.n_calibration) fail("calibration sizes must lie in [1, n_calibration]");
  }
  for (const auto& p : plan.sweep) {
    if (!(p.level >= 0.0) || (p.kind == PerturbationKind::Impulse && p.level > 1.0)) {
      fail("perturbation level out of range in " + condition_name(p));
    }
  }
  for (const auto* gen : {&plan.id_inputs, &plan.foreign_inputs}) {
    if (gen->components < 0 || gen->min_frequency < 0 || gen->max_frequency < gen->min_frequency ||
        !(gen->noise_std >= 0.0)) {
      fail("input generator parameters out of range");
    }
  }
}

Histogram histogram(std::span<const PValue> p_values, std::size_t n_bins) {
  if (n_bins == 0) throw InvalidArgument("histogram needs at least one bin");
  Histogram h;
  h.edges.resize(n_bins + 1);
  for (std::size_t j = 0; j <= n_bins; ++j) h.edges[j] = double(j) / double(n_bins);
  h.counts.assign(n_bins, 0);
  for (const auto& p : p_values) {
    // smallest j with p <= (j + 1) / n_bins, i.e. ceil(p * n_bins) - 1
    const std::size_t scaled = p.numerator * n_bins;
    const std::size_t ceil = (scaled + p.denominator - 1) / p.denominator;
    const std::size_t bin = ceil == 0 ? 0 : std::min(ceil - 1, n_bins - 1);
    ++h.counts[bin];
  }
  return h;
}

std::string condition_name(const PerturbationSpec& spec) {
  return std::string(to_string(spec.kind)) + "-" + format_level(spec.level);
}

const ConditionReport& ExperimentReport::condition(std::string_view name) const {
  for (const auto& c : conditions) {
    if (c.name == name) return c;
  }
  throw InvalidArgument("report has no condition '" + std::string(name) + "'");
}

namespace {

TraceDataset trace_layer(const Network<double>& net, std::size_t layer,
                         const std::vector<VectorXd>& inputs, std::uint64_t first_id) {
  std::vector<ActivationVector> rows(inputs.size());
  parallel_for(inputs.size(), [&](std::size_t i) {
    rows[i] = forward_with_trace(net, inputs[i]).trace[layer + 1].cast<float>();
  });
  TraceDataset out(net.shapes()[layer + 1].size());
  out.reserve(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out.add(TraceRecord{first_id + i, std::move(rows[i]), std::nullopt});
  }
  return out;
}

ConditionReport evaluate(const MonitorArtifact& monitor, const TraceDataset& traces,
                         std::string name, std::size_t bins) {
  const auto batch = check_batch(monitor, traces);
  ConditionReport c;
  c.name = std::move(name);
  c.n = traces.size();
  c.id_count = batch.id_count;
  c.ood_count = batch.ood_count;
  std::vector<PValue> ps;
  ps.reserve(batch.verdicts.size());
  double sum = 0.0;
  for (const auto& v : batch.verdicts) {
    ps.push_back(v.p);
    sum += v.p.value();
    if (v.p.numerator == 0) ++c.zero_p_count;
  }
  c.mean_p = c.n == 0 ? 0.0 : sum / double(c.n);
  c.histogram = histogram(ps, bins);
  return c;
}

}  // namespace

ExperimentReport run_experiment(const ExperimentPlan& plan) {
  validate_plan(plan);
  auto net = init_network(plan.architecture, plan.network_seed);
  const Shape& shape = plan.architecture.input_shape;

  std::mt19937_64 rng(plan.data_seed);
  const std::size_t n_fit = plan.n_proper + plan.n_calibration;
  std::vector<VectorXd> fit_inputs, test_inputs, foreign_inputs;
  fit_inputs.reserve(n_fit);
  for (std::size_t i = 0; i < n_fit; ++i) fit_inputs.push_back(generate_input(plan.id_inputs, shape, rng));
  for (std::size_t i = 0; i < plan.n_test; ++i) {
    test_inputs.push_back(generate_input(plan.id_inputs, shape, rng));
  }
  for (std::size_t i = 0; i < plan.n_foreign; ++i) {
    foreign_inputs.push_back(generate_input(plan.foreign_inputs, shape, rng));
  }

  if (plan.estimate_batchnorm) estimate_batchnorm_statistics(net, fit_inputs);

  const auto fit_traces = trace_layer(net, plan.monitored_layer, fit_inputs, 0);
  const auto split = split_dataset(fit_traces, plan.n_proper, plan.data_seed);

  MonitorConfig config;
  config.tau = plan.tau;
  config.k = plan.k;
  config.layer = "layer" + std::to_string(plan.monitored_layer) + ":" +
                 std::string(to_string(plan.architecture.layers[plan.monitored_layer].kind));
  const auto monitor = build_monitor(split.proper, split.calibration, config, {}, "experiment");

  ExperimentReport report;
  report.layer_name = config.layer;
  report.monitored_layer = plan.monitored_layer;
  report.n_neurons = fit_traces.n_neurons();
  report.tau = plan.tau;
  report.k = plan.k;
  report.n_proper = plan.n_proper;
  report.n_calibration = plan.n_calibration;

  const std::uint64_t test_base = n_fit;
  const auto id_traces = trace_layer(net, plan.monitored_layer, test_inputs, test_base);
  report.conditions.push_back(evaluate(monitor, id_traces, "id", plan.histogram_bins));

  for (std::size_t s = 0; s < plan.sweep.size(); ++s) {
    const auto& spec = plan.sweep[s];
    std::vector<VectorXd> perturbed(test_inputs.size());
    parallel_for(test_inputs.size(), [&](std::size_t i) {
      PerturbationSpec per_sample = spec;
      per_sample.seed = derive_seed(spec.seed, i);
      perturbed[i] = perturb(per_sample, test_inputs[i], &net);
    });
    const auto traces = trace_layer(net, plan.monitored_layer, perturbed, test_base);
    report.conditions.push_back(evaluate(monitor, traces, condition_name(spec), plan.histogram_bins));
  }

  if (!foreign_inputs.empty()) {
    const auto traces =
        trace_layer(net, plan.monitored_layer, foreign_inputs, test_base + plan.n_test);
    report.conditions.push_back(evaluate(monitor, traces, "foreign", plan.histogram_bins));
  }

  report.calibration_self = evaluate(monitor, split.calibration, "calibration", plan.histogram_bins);

  for (const auto size : plan.calibration_sizes) {
    TraceDataset subset(split.calibration.n_neurons());
    for (std::size_t i = 0; i < size; ++i) subset.add(split.calibration[i]);
    const auto small = build_monitor(split.proper, subset, config, {}, "experiment");
    report.calibration_study.push_back(
        {size, evaluate(small, id_traces, "id-cal" + std::to_string(size), plan.histogram_bins)});
  }
  return report;
}

namespace {

json generator_to_json(const InputGenerator& g) {
  return json{{"mean", g.mean},
              {"amplitude", g.amplitude},
              {"components", g.components},
              {"min_frequency", g.min_frequency},
              {"max_frequency", g.max_frequency},
              {"noise_std", g.noise_std},
              {"gain", g.gain},
              {"scene_seed", g.scene_seed},
              {"scene_components", g.scene_components},
              {"scene_amplitude", g.scene_amplitude}};
}

InputGenerator generator_from(const json& j, InputGenerator g) {
  g.mean = j.value("mean", g.mean);
  g.amplitude = j.value("amplitude", g.amplitude);
  g.components = j.value("components", g.components);
  g.min_frequency = j.value("min_frequency", g.min_frequency);
  g.max_frequency = j.value("max_frequency", g.max_frequency);
  g.noise_std = j.value("noise_std", g.noise_std);
  g.gain = j.value("gain", g.gain);
  g.scene_seed = j.value("scene_seed", g.scene_seed);
  g.scene_components = j.value("scene_components", g.scene_components);
  g.scene_amplitude = j.value("scene_amplitude", g.scene_amplitude);
  return g;
}

json condition_to_json(const ConditionReport& c) {
  return json{{"name", c.name},
              {"n", c.n},
              {"id_count", c.id_count},
              {"ood_count", c.ood_count},
              {"mean_p", c.mean_p},
              {"zero_p_count", c.zero_p_count},
              {"histogram", json{{"edges", c.histogram.edges}, {"counts", c.histogram.counts}}}};
}

ConditionReport condition_from(const json& j) {
  ConditionReport c;
  c.name = j.at("name").get<std::string>();
  c.n = j.at("n").get<std::size_t>();
  c.id_count = j.at("id_count").get<std::size_t>();
  c.ood_count = j.at("ood_count").get<std::size_t>();
  c.mean_p = j.value("mean_p", 0.0);
  c.zero_p_count = j.value("zero_p_count", std::size_t{0});
  const auto& h = j.at("histogram");
  c.histogram.edges = h.at("edges").get<std::vector<double>>();
  c.histogram.counts = h.at("counts").get<std::vector<std::size_t>>();
  if (c.id_count + c.ood_count != c.n) {
    throw ValidationError("condition '" + c.name + "': id_count + ood_count != n");
  }
  if (c.histogram.edges.size() != c.histogram.counts.size() + 1) {
    throw ValidationError("condition '" + c.name + "': histogram needs one more edge than bins");
  }
  return c;
}

}  // namespace

std::string plan_to_json(const ExperimentPlan& plan) {
  json sweep = json::array();
  for (const auto& s : plan.sweep) {
    sweep.push_back(json{{"kind", to_string(s.kind)}, {"level", s.level}, {"seed", s.seed}});
  }
  json j{{"architecture", json_codec::to_json(plan.architecture)},
         {"network_seed", plan.network_seed},
         {"data_seed", plan.data_seed},
         {"estimate_batchnorm", plan.estimate_batchnorm},
         {"n_proper", plan.n_proper},
         {"n_calibration", plan.n_calibration},
         {"n_test", plan.n_test},
         {"n_foreign", plan.n_foreign},
         {"id_inputs", generator_to_json(plan.id_inputs)},
         {"foreign_inputs", generator_to_json(plan.foreign_inputs)},
         {"sweep", std::move(sweep)},
         {"tau", plan.tau},
         {"k", plan.k},
         {"monitored_layer", plan.monitored_layer},
         {"histogram_bins", plan.histogram_bins},
         {"calibration_sizes", plan.calibration_sizes}};
  return j.dump(1) + "\n";
}

ExperimentPlan plan_from_json(std::string_view text) {
  const auto j = json_codec::parse(text, "experiment plan");
  try {
    auto plan = default_plan();
    if (j.contains("architecture")) {
      plan.architecture = json_codec::architecture_from(j.at("architecture"));
      if (!j.contains("monitored_layer")) {
        plan.monitored_layer = last_layer_of_kind(plan.architecture, LayerKind::BatchNorm);
      }
    }
    plan.network_seed = j.value("network_seed", plan.network_seed);
    plan.data_seed = j.value("data_seed", plan.data_seed);
    plan.estimate_batchnorm = j.value("estimate_batchnorm", plan.estimate_batchnorm);
    plan.n_proper = j.value("n_proper", plan.n_proper);
    plan.n_calibration = j.value("n_calibration", plan.n_calibration);
    plan.n_test = j.value("n_test", plan.n_test);
    plan.n_foreign = j.value("n_foreign", plan.n_foreign);
    if (j.contains("id_inputs")) plan.id_inputs = generator_from(j.at("id_inputs"), plan.id_inputs);
    if (j.contains("foreign_inputs")) {
      plan.foreign_inputs = generator_from(j.at("foreign_inputs"), plan.foreign_inputs);
    }
    if (j.contains("sweep")) {
      plan.sweep.clear();
      for (const auto& s : j.at("sweep")) {
        plan.sweep.push_back({parse_perturbation_kind(s.at("kind").get<std::string>()),
                              s.at("level").get<double>(), s.value("seed", std::uint64_t{0})});
      }
    }
    plan.tau = j.value("tau", plan.tau);
    plan.k = j.value("k", plan.k);
    plan.monitored_layer = j.value("monitored_layer", plan.monitored_layer);
    plan.histogram_bins = j.value("histogram_bins", plan.histogram_bins);
    if (j.contains("calibration_sizes")) {
      plan.calibration_sizes = j.at("calibration_sizes").get<std::vector<std::size_t>>();
    }
    return plan;
  } catch (const json::exception& e) {
    throw ValidationError(std::string("invalid experiment plan: ") + e.what());
  }
}

std::string report_to_json(const ExperimentReport& report) {
  json conditions = json::array();
  for (const auto& c : report.conditions) conditions.push_back(condition_to_json(c));
  json study = json::array();
  for (const auto& s : report.calibration_study) {
    study.push_back(json{{"n_calibration", s.n_calibration}, {"id_test", condition_to_json(s.id_test)}});
  }
  json j{{"metadata",
          json{{"layer", report.layer_name},
               {"monitored_layer", report.monitored_layer},
               {"n_neurons", report.n_neurons},
               {"tau", report.tau},
               {"k", report.k},
               {"n_proper", report.n_proper},
               {"n_calibration", report.n_calibration}}},
         {"conditions", std::move(conditions)},
         {"calibration_study", std::move(study)}};
  if (report.calibration_self) j["calibration_self"] = condition_to_json(*report.calibration_self);
  return j.dump(1) + "\n";
}

ExperimentReport report_from_json(std::string_view text) {
  const auto j = json_codec::parse(text, "experiment report");
  try {
    ExperimentReport r;
    const auto& m = j.at("metadata");
    r.layer_name = m.value("layer", std::string());
    r.monitored_layer = m.value("monitored_layer", std::size_t{0});
    r.n_neurons = m.value("n_neurons", Index{0});
    r.tau = m.value("tau", 0.05);
    r.k = m.value("k", kDefaultK);
    r.n_proper = m.value("n_proper", std::size_t{0});
    r.n_calibration = m.value("n_calibration", std::size_t{0});
    for (const auto& c : j.at("conditions")) r.conditions.push_back(condition_from(c));
    if (j.contains("calibration_self")) r.calibration_self = condition_from(j.at("calibration_self"));
    if (j.contains("calibration_study")) {
      for (const auto& s : j.at("calibration_study")) {
        r.calibration_study.push_back(
            {s.at("n_calibration").get<std::size_t>(), condition_from(s.at("id_test"))});
      }
    }
    return r;
  } catch (const json::exception& e) {
    throw ValidationError(std::string("invalid experiment report: ") + e.what());
  }
}

}  // namespace actmon
