#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "actmon/error.hpp"
#include "actmon/trace.hpp"
#include "actmon/types.hpp"

namespace actmon {

enum class AbstractionMode { ClassAgnostic, PerClass };

std::string_view to_string(AbstractionMode mode);
AbstractionMode parse_abstraction_mode(std::string_view name);

inline constexpr double kDefaultK = 2.0;
/// Half-width of the membership interval for neurons with zero spread.
inline constexpr double kZeroSigmaTolerance = 1e-9;

/// Per-neuron mean and (Bessel-corrected) standard deviation.
struct NeuronStats {
  VectorXd mu;
  VectorXd sigma;

  friend bool operator==(const NeuronStats& a, const NeuronStats& b) {
    return a.mu.size() == b.mu.size() && a.sigma.size() == b.sigma.size() && a.mu == b.mu &&
           a.sigma == b.sigma;
  }
};

/// Closed per-neuron intervals [mu - k sigma, mu + k sigma].
struct NeuronBounds {
  VectorXd lower;
  VectorXd upper;
};

/// Fitted Gaussian interval abstraction of one traced layer, either one
/// table for all inputs or one table per class label.
class GaussianAbstraction {
 public:
  /// Class-agnostic abstraction.
  GaussianAbstraction(NeuronStats stats, double k, std::vector<Index> monitored = {});
  /// Per-class abstraction, keyed by class label.
  GaussianAbstraction(std::map<std::int32_t, NeuronStats> per_class, double k,
                      std::vector<Index> monitored = {});

  AbstractionMode mode() const noexcept { return mode_; }
  double k() const noexcept { return k_; }
  Index n_neurons() const noexcept { return n_neurons_; }

  /// Monitored neuron indices, ascending. Empty means every neuron.
  const std::vector<Index>& monitored() const noexcept { return monitored_; }
  bool monitors_all() const noexcept { return monitored_.empty(); }
  Index monitored_count() const noexcept {
    return monitors_all() ? n_neurons_ : static_cast<Index>(monitored_.size());
  }

  std::vector<std::int32_t> classes() const;

  /// Table for `label`; the label must be empty in class-agnostic mode and
  /// a fitted class in per-class mode.
  const NeuronStats& stats(std::optional<std::int32_t> label = std::nullopt) const {
    return entry(label).stats;
  }
  const NeuronBounds& bounds(std::optional<std::int32_t> label = std::nullopt) const {
    return entry(label).bounds;
  }

  friend bool operator==(const GaussianAbstraction& a, const GaussianAbstraction& b);

 private:
  struct Entry {
    NeuronStats stats;
    NeuronBounds bounds;
  };
  static constexpr std::int32_t kAgnosticKey = -1;

  void finish(std::vector<Index> monitored);
  const Entry& entry(std::optional<std::int32_t> label) const;

  AbstractionMode mode_;
  double k_;
  Index n_neurons_ = 0;
  std::vector<Index> monitored_;
  std::map<std::int32_t, Entry> tables_;
};

/// Sample mean and Bessel-corrected standard deviation per neuron (per class
/// in per-class mode), accumulated in double in record order.
/// Throws InvalidArgument for k <= 0, ValidationError when labels are
/// missing in per-class mode or a group has fewer than two samples.
GaussianAbstraction fit(const TraceDataset& dataset, AbstractionMode mode, double k = kDefaultK,
                        std::vector<Index> monitored = {});

/// Number of monitored neurons outside their interval.
template <typename Derived>
Index outside_count(const GaussianAbstraction& abs, const Eigen::MatrixBase<Derived>& x,
                    std::optional<std::int32_t> label = std::nullopt) {
  const auto& b = abs.bounds(label);
  if (x.size() != abs.n_neurons()) {
    throw ValidationError("activation vector has " + std::to_string(x.size()) +
                          " neurons, abstraction expects " + std::to_string(abs.n_neurons()));
  }
  if (abs.monitors_all()) {
    const auto h = x.derived().template cast<double>().array();
    return ((h < b.lower.array()) || (h > b.upper.array())).count();
  }
  Index outside = 0;
  for (const Index i : abs.monitored()) {
    const double h = static_cast<double>(x.coeff(i));
    outside += (h < b.lower[i] || h > b.upper[i]) ? 1 : 0;
  }
  return outside;
}

/// Fraction of monitored neurons outside their interval, in [0, 1].
template <typename Derived>
double outside_fraction(const GaussianAbstraction& abs, const Eigen::MatrixBase<Derived>& x,
                        std::optional<std::int32_t> label = std::nullopt) {
  return static_cast<double>(outside_count(abs, x, label)) /
         static_cast<double>(abs.monitored_count());
}

/// Fixed-percentage membership test: true iff the inside fraction reaches
/// `min_inside_fraction`. A threshold of 1 demands every neuron inside.
template <typename Derived>
bool percentage_check(const GaussianAbstraction& abs, const Eigen::MatrixBase<Derived>& x,
                      std::optional<std::int32_t> label, double min_inside_fraction) {
  if (!(min_inside_fraction >= 0.0 && min_inside_fraction <= 1.0)) {
    throw InvalidArgument("min_inside_fraction must lie in [0, 1]");
  }
  const Index m = abs.monitored_count();
  const Index inside = m - outside_count(abs, x, label);
  // Compare counts so that a threshold of exactly 1 is the strict condition.
  return static_cast<double>(inside) >= min_inside_fraction * static_cast<double>(m);
}

}  // namespace actmon
