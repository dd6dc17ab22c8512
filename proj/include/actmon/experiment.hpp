#pragma once

// Desk-scale reproduction of the evaluation protocol: synthesize
// in-distribution images, trace one layer of a reference network, build a
// monitor, and measure how perturbed and foreign inputs are classified.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "actmon/icad.hpp"
#include "actmon/network.hpp"
#include "actmon/perturb.hpp"

namespace actmon {

/// Images built from 2-D cosine components over a base brightness: a fixed
/// "scene" shared by every image of the generator (drawn from scene_seed)
/// and a few per-image random components. The sum is stretched by `gain`
/// around 0.5, i.i.d. pixel noise is added, and the result clipped to
/// [0, 1]. Frequencies are drawn from [min_frequency, max_frequency]
/// cycles per image.
struct InputGenerator {
  double mean = 0.5;
  double amplitude = 0.2;
  int components = 3;
  int min_frequency = 0;
  int max_frequency = 2;
  double noise_std = 0.02;
  double gain = 1.0;
  std::uint64_t scene_seed = 0;
  int scene_components = 0;
  double scene_amplitude = 0.0;
};

VectorXd generate_input(const InputGenerator& gen, const Shape& shape, std::mt19937_64& rng);

struct ExperimentPlan {
  Architecture architecture;
  std::uint64_t network_seed = 1;
  std::uint64_t data_seed = 2;
  /// Replace batchnorm running statistics by those of the proper inputs.
  bool estimate_batchnorm = true;

  std::size_t n_proper = 500;
  std::size_t n_calibration = 100;
  std::size_t n_test = 100;
  std::size_t n_foreign = 100;

  InputGenerator id_inputs;
  InputGenerator foreign_inputs;
  std::vector<PerturbationSpec> sweep;

  double tau = 0.05;
  double k = kDefaultK;
  /// Index of the layer whose output is monitored.
  std::size_t monitored_layer = 0;
  std::size_t histogram_bins = 20;
  /// Optional calibration-size study; every entry must be <= n_calibration.
  std::vector<std::size_t> calibration_sizes;
};

/// Index of the last layer of `kind`; throws if there is none.
std::size_t last_layer_of_kind(const Architecture& arch, LayerKind kind);

/// 16x16 inputs through conv-bn-lrelu, conv-bn-lrelu, dense(64)-bn-lrelu,
/// dense(10); monitors the last batchnorm (64 neurons). ID and foreign
/// images are drawn around two different fixed scenes. Sweep: Gaussian variance
/// {0.02, 0.04, 0.06}, impulse {0.03, 0.06}, FGSM {0.02, 0.04, 0.06}.
ExperimentPlan default_plan();

/// Throws InvalidArgument describing the first inconsistency.
void validate_plan(const ExperimentPlan& plan);

struct Histogram {
  std::vector<double> edges;        // n_bins + 1 values from 0 to 1
  std::vector<std::size_t> counts;  // n_bins values
};

/// Equal-width bins over [0, 1], right-closed: the first bin is [0, 1/n],
/// bin j > 0 is (j/n, (j+1)/n]. Binning uses the exact fraction.
Histogram histogram(std::span<const PValue> p_values, std::size_t n_bins);

struct ConditionReport {
  std::string name;
  std::size_t n = 0;
  std::size_t id_count = 0;
  std::size_t ood_count = 0;
  double mean_p = 0.0;
  /// Samples whose p-value is exactly 0.
  std::size_t zero_p_count = 0;
  Histogram histogram;

  double detection_rate() const { return n == 0 ? 0.0 : double(ood_count) / double(n); }
};

struct CalibrationStudyEntry {
  std::size_t n_calibration = 0;
  ConditionReport id_test;
};

struct ExperimentReport {
  std::string layer_name;
  std::size_t monitored_layer = 0;
  Index n_neurons = 0;
  double tau = 0.05;
  double k = kDefaultK;
  std::size_t n_proper = 0;
  std::size_t n_calibration = 0;
  std::vector<ConditionReport> conditions;
  /// The calibration samples checked against their own monitor.
  std::optional<ConditionReport> calibration_self;
  std::vector<CalibrationStudyEntry> calibration_study;

  /// Throws InvalidArgument if no condition has this name.
  const ConditionReport& condition(std::string_view name) const;
};

/// Condition names: "id", one per sweep entry as "<kind>-<level>", and
/// "foreign". Deterministic for a fixed plan.
ExperimentReport run_experiment(const ExperimentPlan& plan);

std::string condition_name(const PerturbationSpec& spec);

std::string plan_to_json(const ExperimentPlan& plan);
/// Missing fields take their default_plan() values.
ExperimentPlan plan_from_json(std::string_view text);

std::string report_to_json(const ExperimentReport& report);
ExperimentReport report_from_json(std::string_view text);

/// Writes table.csv (name,n,id_count,ood_count), one hist_<name>.csv per
/// condition and, when `svg` is set, one hist_<name>.svg bar chart each.
/// Returns the paths written.
std::vector<std::filesystem::path> write_report_files(const ExperimentReport& report,
                                                      const std::filesystem::path& out_dir,
                                                      bool svg);

}  // namespace actmon
