#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "actmon/abstraction.hpp"
#include "actmon/icad.hpp"
#include "actmon/trace.hpp"

namespace actmon {

inline constexpr int kMonitorSchemaVersion = 1;

struct MonitorConfig {
  /// p-value threshold; p < tau raises an alarm.
  double tau = 0.05;
  double k = kDefaultK;
  AbstractionMode mode = AbstractionMode::ClassAgnostic;
  std::string layer;

  friend bool operator==(const MonitorConfig&, const MonitorConfig&) = default;
};

struct Provenance {
  /// FNV-1a over the binary encodings of the datasets the monitor saw.
  std::string hash;
  /// ISO-8601 UTC creation time.
  std::string created;

  friend bool operator==(const Provenance&, const Provenance&) = default;
};

/// Frozen monitor: abstraction fitted on the proper training set, scores of
/// the calibration set, and the alarm threshold.
struct MonitorArtifact {
  MonitorConfig config;
  GaussianAbstraction abstraction;
  CalibrationScores calibration;
  Provenance provenance;

  friend bool operator==(const MonitorArtifact&, const MonitorArtifact&) = default;
};

/// Output of the fit step alone, before calibration.
struct FittedAbstraction {
  MonitorConfig config;
  GaussianAbstraction abstraction;
  std::vector<std::uint64_t> proper_ids;
  std::string proper_hash;

  friend bool operator==(const FittedAbstraction&, const FittedAbstraction&) = default;
};

enum class Decision { InDistribution, OutOfDistribution };

std::string_view to_string(Decision d);

struct Verdict {
  std::uint64_t sample_id = 0;
  NonconformityScore score;
  PValue p;
  Decision decision = Decision::InDistribution;
};

/// Creation timestamp: SOURCE_DATE_EPOCH when set, otherwise the clock.
std::string creation_timestamp();

FittedAbstraction fit_monitor(const TraceDataset& proper, const MonitorConfig& config,
                              std::vector<Index> monitored = {});

/// Calibrates a fitted abstraction. Throws ValidationError when the
/// calibration set is empty, incompatible, or shares ids with the proper set.
MonitorArtifact calibrate_monitor(const FittedAbstraction& fitted, const TraceDataset& calibration,
                                  double tau, std::string created = creation_timestamp());

/// fit_monitor followed by calibrate_monitor.
MonitorArtifact build_monitor(const TraceDataset& proper, const TraceDataset& calibration,
                              const MonitorConfig& config, std::vector<Index> monitored = {},
                              std::string created = creation_timestamp());

/// One pass over the monitored neurons plus a binary search; no allocation
/// when every neuron is monitored.
template <typename Derived>
Verdict check(const MonitorArtifact& monitor, const Eigen::MatrixBase<Derived>& x,
              std::uint64_t sample_id, std::optional<std::int32_t> label = std::nullopt) {
  Verdict v;
  v.sample_id = sample_id;
  v.score = nonconformity(monitor.abstraction, x, label);
  v.p = p_value(monitor.calibration, v.score);
  v.decision = v.p.value() < monitor.config.tau ? Decision::OutOfDistribution
                                                : Decision::InDistribution;
  return v;
}

struct BatchResult {
  std::vector<Verdict> verdicts;
  std::size_t id_count = 0;
  std::size_t ood_count = 0;
};

/// Checks every record in order; records' labels are used in per-class mode.
BatchResult check_batch(const MonitorArtifact& monitor, const TraceDataset& dataset);

std::string monitor_to_json(const MonitorArtifact& monitor);
MonitorArtifact monitor_from_json(std::string_view text);
void save_monitor(const MonitorArtifact& monitor, const std::filesystem::path& path);
MonitorArtifact load_monitor(const std::filesystem::path& path);

std::string fitted_to_json(const FittedAbstraction& fitted);
FittedAbstraction fitted_from_json(std::string_view text);

/// Verdict stream rows: sample_id, score, p_num, p_den, decision.
std::string verdicts_to_jsonl(const std::vector<Verdict>& verdicts);
std::string verdicts_to_csv(const std::vector<Verdict>& verdicts);

}  // namespace actmon
