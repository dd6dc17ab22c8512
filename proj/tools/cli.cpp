#include "cli.hpp"

#include <functional>
#include <iomanip>
#include <iostream>
#include <optional>

#include <CLI11.hpp>

#include "actmon/error.hpp"
#include "actmon/experiment.hpp"
#include "actmon/io.hpp"
#include "actmon/monitor.hpp"
#include "actmon/perturb.hpp"
#include "actmon/trace.hpp"

namespace actmon::cli {

namespace {

struct FitArgs {
  std::string traces, out, mode = "class_agnostic", layer;
  double k = kDefaultK;
  std::vector<Index> monitored;
  std::optional<std::size_t> split_index;
  std::uint64_t seed = 0;
  std::string calibration_out;
};

struct CalibrateArgs {
  std::string fitted, traces, out;
  double tau = 0.05;
};

struct CheckArgs {
  std::string monitor, traces, out, emit = "jsonl";
};

struct PerturbArgs {
  std::string kind, in, out, network;
  double level = 0.0;
  std::uint64_t seed = 0;
};

struct ExperimentArgs {
  std::string plan, out, write_plan;
  std::optional<std::size_t> layer;
};

struct ReportArgs {
  std::string experiment, out_dir;
  bool svg = false;
};

TraceDataset read_traces(const std::string& path) {
  return load_trace(path, format_for(path));
}

int cmd_fit(const FitArgs& a, std::ostream& out) {
  const auto traces = read_traces(a.traces);
  MonitorConfig config;
  config.k = a.k;
  config.mode = parse_abstraction_mode(a.mode);
  config.layer = a.layer;

  const TraceDataset* proper = &traces;
  std::optional<DatasetSplit> split;
  if (a.split_index) {
    split = split_dataset(traces, *a.split_index, a.seed);
    proper = &split->proper;
  }
  const auto fitted = fit_monitor(*proper, config, a.monitored);
  write_file_atomic(a.out, fitted_to_json(fitted));
  if (split && !a.calibration_out.empty()) {
    save_trace(split->calibration, a.calibration_out, format_for(a.calibration_out));
  }

  const auto& abs = fitted.abstraction;
  out << "neurons: " << abs.n_neurons() << "\n";
  out << "monitored: " << abs.monitored_count() << "\n";
  out << "samples: " << proper->size() << "\n";
  out << "mode: " << to_string(abs.mode()) << "\n";
  out << "k: " << std::fixed << std::setprecision(1) << abs.k() << std::defaultfloat << "\n";
  if (abs.mode() == AbstractionMode::PerClass) {
    out << "classes:";
    for (const auto c : abs.classes()) out << ' ' << c;
    out << "\n";
  } else {
    const auto& s = abs.stats();
    out << "mean sigma: " << s.sigma.mean() << "\n";
  }
  if (split) out << "calibration records: " << split->calibration.size() << "\n";
  return kOk;
}

int cmd_calibrate(const CalibrateArgs& a, std::ostream& out) {
  const auto fitted = fitted_from_json(read_file(a.fitted));
  const auto monitor = calibrate_monitor(fitted, read_traces(a.traces), a.tau);
  save_monitor(monitor, a.out);
  out << "calibration scores: " << monitor.calibration.size() << "\n";
  out << "score range: [" << monitor.calibration.min() << ", " << monitor.calibration.max()
      << "]\n";
  out << "tau: " << monitor.config.tau << "\n";
  return kOk;
}

int cmd_check(const CheckArgs& a, std::ostream& out) {
  const auto monitor = load_monitor(a.monitor);
  const auto traces = read_traces(a.traces);
  const auto batch = check_batch(monitor, traces);
  write_file_atomic(a.out, a.emit == "csv" ? verdicts_to_csv(batch.verdicts)
                                           : verdicts_to_jsonl(batch.verdicts));
  out << "ID: " << batch.id_count << ", OOD: " << batch.ood_count << "\n";
  return kOk;
}

int cmd_perturb(const PerturbArgs& a, std::ostream& out) {
  const auto kind = parse_perturbation_kind(a.kind);
  std::optional<Network<double>> net;
  if (kind == PerturbationKind::Fgsm) {
    if (a.network.empty()) throw InvalidArgument("--network is required for fgsm");
    net = load_network(a.network);
  }
  const auto images = read_traces(a.in);
  if (net && net->input_shape().size() != images.n_neurons()) {
    throw ValidationError("images have " + std::to_string(images.n_neurons()) +
                          " pixels, network expects " + std::to_string(net->input_shape().size()));
  }
  TraceDataset result(images.n_neurons());
  result.reserve(images.size());
  for (const auto& r : images) {
    const VectorXd x = r.activations.cast<double>();
    if ((x.array() < 0.0).any() || (x.array() > 1.0).any()) {
      throw ValidationError("image " + std::to_string(r.sample_id) + " has pixels outside [0, 1]");
    }
    const PerturbationSpec spec{kind, a.level, derive_seed(a.seed, r.sample_id)};
    result.add(TraceRecord{r.sample_id, perturb(spec, x, net ? &*net : nullptr).cast<float>(),
                           r.label});
  }
  save_trace(result, a.out, format_for(a.out));
  out << "perturbed " << result.size() << " image(s) with " << a.kind << " level " << a.level
      << "\n";
  return kOk;
}

int cmd_experiment(const ExperimentArgs& a, std::ostream& out) {
  auto plan = a.plan.empty() ? default_plan() : plan_from_json(read_file(a.plan));
  if (a.layer) plan.monitored_layer = *a.layer;
  if (!a.write_plan.empty()) write_file_atomic(a.write_plan, plan_to_json(plan));
  const auto report = run_experiment(plan);
  write_file_atomic(a.out, report_to_json(report));
  out << "layer " << report.layer_name << " (" << report.n_neurons << " neurons)\n";
  for (const auto& c : report.conditions) {
    out << c.name << ": ID " << c.id_count << ", OOD " << c.ood_count << ", mean p "
        << c.mean_p << "\n";
  }
  return kOk;
}

int cmd_report(const ReportArgs& a, std::ostream& out) {
  const auto report = report_from_json(read_file(a.experiment));
  const auto files = write_report_files(report, a.out_dir, a.svg);
  out << "wrote " << files.size() << " file(s) to " << a.out_dir << "\n";
  return kOk;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Runtime out-of-distribution monitor for activation traces", "actmon"};
  app.require_subcommand(1);
  std::function<int()> action;

  FitArgs fit_args;
  auto* fit = app.add_subcommand("fit", "Fit Gaussian interval statistics on proper-training traces");
  fit->add_option("--traces", fit_args.traces, "Trace file (.csv or binary)")->required();
  fit->add_option("--mode", fit_args.mode, "Abstraction mode")
      ->check(CLI::IsMember({"class_agnostic", "per_class"}));
  fit->add_option("--k", fit_args.k, "Interval width multiplier")->check(CLI::PositiveNumber);
  fit->add_option("--layer", fit_args.layer, "Name of the traced layer");
  fit->add_option("--monitored", fit_args.monitored, "Monitored neuron indices (default: all)")
      ->delimiter(',');
  fit->add_option("--split-index", fit_args.split_index,
                  "Fit on a seeded split of this many records instead of the whole file");
  fit->add_option("--seed", fit_args.seed, "Split seed");
  fit->add_option("--calibration-out", fit_args.calibration_out,
                  "Where to write the calibration remainder of the split");
  fit->add_option("--out", fit_args.out, "Fitted-statistics JSON")->required();
  fit->callback([&] { action = [&] { return cmd_fit(fit_args, out); }; });

  CalibrateArgs cal_args;
  auto* cal = app.add_subcommand("calibrate", "Score a calibration set and freeze the monitor");
  cal->add_option("--fit", cal_args.fitted, "Output of `fit`")->required();
  cal->add_option("--traces", cal_args.traces, "Calibration traces")->required();
  cal->add_option("--tau", cal_args.tau, "p-value threshold")->check(CLI::Range(0.0, 1.0));
  cal->add_option("--out", cal_args.out, "Monitor artifact JSON")->required();
  cal->callback([&] { action = [&] { return cmd_calibrate(cal_args, out); }; });

  CheckArgs check_args;
  auto* chk = app.add_subcommand("check", "Classify traces as ID or OOD");
  chk->add_option("--monitor", check_args.monitor, "Monitor artifact JSON")->required();
  chk->add_option("--traces", check_args.traces, "Traces to check")->required();
  chk->add_option("--out", check_args.out, "Verdict stream")->required();
  chk->add_option("--emit", check_args.emit, "Verdict format")
      ->check(CLI::IsMember({"jsonl", "csv"}));
  chk->callback([&] { action = [&] { return cmd_check(check_args, out); }; });

  PerturbArgs pert_args;
  auto* pert = app.add_subcommand("perturb", "Corrupt image tensors stored in a trace container");
  pert->add_option("--kind", pert_args.kind, "Perturbation")
      ->required()
      ->check(CLI::IsMember({"gaussian", "impulse", "fgsm"}));
  pert->add_option("--level", pert_args.level,
                   "Variance (gaussian), probability (impulse) or epsilon (fgsm)")
      ->required()
      ->check(CLI::NonNegativeNumber);
  pert->add_option("--seed", pert_args.seed, "Base seed")->required();
  pert->add_option("--in", pert_args.in, "Input images")->required();
  pert->add_option("--out", pert_args.out, "Output images")->required();
  pert->add_option("--network", pert_args.network, "Network JSON (fgsm)");
  pert->callback([&] { action = [&] { return cmd_perturb(pert_args, out); }; });

  ExperimentArgs exp_args;
  auto* exp = app.add_subcommand("experiment", "Run the desk-scale detection experiment");
  exp->add_option("--plan", exp_args.plan, "Plan JSON (default: built-in plan)");
  exp->add_option("--layer", exp_args.layer, "Override the monitored layer index");
  exp->add_option("--write-plan", exp_args.write_plan, "Also write the effective plan here");
  exp->add_option("--out", exp_args.out, "Report JSON")->required();
  exp->callback([&] { action = [&] { return cmd_experiment(exp_args, out); }; });

  ReportArgs rep_args;
  auto* rep = app.add_subcommand("report", "Render an experiment report to CSV/SVG");
  rep->add_option("--experiment", rep_args.experiment, "Report JSON")->required();
  rep->add_option("--out-dir", rep_args.out_dir, "Output directory")->required();
  rep->add_flag("--svg", rep_args.svg, "Also write SVG histograms");
  rep->callback([&] { action = [&] { return cmd_report(rep_args, out); }; });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kUsage;
  }

  try {
    return action();
  } catch (const InvalidArgument& e) {
    err << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kData;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return kData;
  }
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  std::vector<const char*> argv{"actmon"};
  for (const auto& a : args) argv.push_back(a.c_str());
  return run(static_cast<int>(argv.size()), argv.data(), out, err);
}

}  // namespace actmon::cli
