#pragma once

// Inductive conformal anomaly detection on top of the Gaussian abstraction.
// The nonconformity of an input is the fraction of monitored neurons outside
// their interval; its p-value is the share of calibration scores that are
// at least as large.

#include <cstddef>
#include <optional>
#include <vector>

#include "actmon/abstraction.hpp"
#include "actmon/trace.hpp"

namespace actmon {

struct NonconformityScore {
  double value = 0.0;
  /// Exact form of `value`: outside / monitored.
  Index outside = 0;
  Index monitored = 1;
};

struct PValue {
  std::size_t numerator = 0;
  std::size_t denominator = 1;

  double value() const noexcept {
    return static_cast<double>(numerator) / static_cast<double>(denominator);
  }
  friend bool operator==(const PValue&, const PValue&) = default;
};

/// Nonconformity scores of the calibration set, sorted ascending.
class CalibrationScores {
 public:
  /// Sorts `scores`; throws ValidationError if empty or outside [0, 1].
  explicit CalibrationScores(std::vector<double> scores);

  const std::vector<double>& scores() const noexcept { return scores_; }
  std::size_t size() const noexcept { return scores_.size(); }
  double min() const noexcept { return scores_.front(); }
  double max() const noexcept { return scores_.back(); }

  friend bool operator==(const CalibrationScores&, const CalibrationScores&) = default;

 private:
  std::vector<double> scores_;
};

template <typename Derived>
NonconformityScore nonconformity(const GaussianAbstraction& abs,
                                 const Eigen::MatrixBase<Derived>& x,
                                 std::optional<std::int32_t> label = std::nullopt) {
  const Index outside = outside_count(abs, x, label);
  const Index m = abs.monitored_count();
  return {static_cast<double>(outside) / static_cast<double>(m), outside, m};
}

/// Scores every calibration record (using its label in per-class mode).
CalibrationScores calibrate(const GaussianAbstraction& abs, const TraceDataset& calibration);

/// |{s in cal : s >= score}| / |cal|, by binary search.
PValue p_value(const CalibrationScores& cal, double score);

inline PValue p_value(const CalibrationScores& cal, const NonconformityScore& score) {
  return p_value(cal, score.value);
}

/// Full (transductive) conformal p-value: each training record is scored
/// against a class-agnostic abstraction refitted without it, and compared
/// with the score of `x` against the abstraction of the whole set.
/// Quadratic in |training|; meant as a reference for the inductive variant.
PValue cad_p_value(const TraceDataset& training, const Eigen::Ref<const ActivationVector>& x,
                   double k = kDefaultK);

}  // namespace actmon
