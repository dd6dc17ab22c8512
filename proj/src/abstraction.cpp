#include "actmon/abstraction.hpp"

#include <algorithm>
#include <cmath>

namespace actmon {

std::string_view to_string(AbstractionMode mode) {
  return mode == AbstractionMode::PerClass ? "per_class" : "class_agnostic";
}

AbstractionMode parse_abstraction_mode(std::string_view name) {
  if (name == "class_agnostic") return AbstractionMode::ClassAgnostic;
  if (name == "per_class") return AbstractionMode::PerClass;
  throw InvalidArgument("unknown abstraction mode '" + std::string(name) + "'");
}

namespace {

void validate_stats(const NeuronStats& s, const std::string& what) {
  if (s.mu.size() == 0 || s.mu.size() != s.sigma.size()) {
    throw ValidationError(what + ": mu and sigma must be non-empty and equally long");
  }
  if (!s.mu.allFinite() || !s.sigma.allFinite() || (s.sigma.array() < 0.0).any()) {
    throw ValidationError(what + ": statistics must be finite with sigma >= 0");
  }
}

NeuronBounds bounds_for(const NeuronStats& s, double k) {
  NeuronBounds b{s.mu - k * s.sigma, s.mu + k * s.sigma};
  for (Index i = 0; i < s.sigma.size(); ++i) {
    if (s.sigma[i] == 0.0) {
      b.lower[i] = s.mu[i] - kZeroSigmaTolerance;
      b.upper[i] = s.mu[i] + kZeroSigmaTolerance;
    }
  }
  return b;
}

void validate_k(double k) {
  if (!(k > 0.0) || !std::isfinite(k)) throw InvalidArgument("k must be finite and > 0");
}

}  // namespace

GaussianAbstraction::GaussianAbstraction(NeuronStats stats, double k, std::vector<Index> monitored)
    : mode_(AbstractionMode::ClassAgnostic), k_(k) {
  validate_k(k);
  validate_stats(stats, "class-agnostic table");
  n_neurons_ = stats.mu.size();
  tables_.emplace(kAgnosticKey, Entry{std::move(stats), {}});
  finish(std::move(monitored));
}

GaussianAbstraction::GaussianAbstraction(std::map<std::int32_t, NeuronStats> per_class, double k,
                                         std::vector<Index> monitored)
    : mode_(AbstractionMode::PerClass), k_(k) {
  validate_k(k);
  if (per_class.empty()) throw ValidationError("per-class abstraction needs at least one class");
  for (auto& [label, stats] : per_class) {
    if (label < 0) throw ValidationError("class labels must be >= 0");
    validate_stats(stats, "class " + std::to_string(label));
    if (n_neurons_ == 0) n_neurons_ = stats.mu.size();
    if (stats.mu.size() != n_neurons_) {
      throw ValidationError("class tables disagree on the neuron count");
    }
    tables_.emplace(label, Entry{std::move(stats), {}});
  }
  finish(std::move(monitored));
}

void GaussianAbstraction::finish(std::vector<Index> monitored) {
  for (auto& [label, e] : tables_) e.bounds = bounds_for(e.stats, k_);
  std::sort(monitored.begin(), monitored.end());
  monitored.erase(std::unique(monitored.begin(), monitored.end()), monitored.end());
  if (!monitored.empty() && (monitored.front() < 0 || monitored.back() >= n_neurons_)) {
    throw ValidationError("monitored neuron index out of range");
  }
  // A subset naming every neuron is the default set.
  if (static_cast<Index>(monitored.size()) == n_neurons_) monitored.clear();
  monitored_ = std::move(monitored);
}

const GaussianAbstraction::Entry& GaussianAbstraction::entry(
    std::optional<std::int32_t> label) const {
  if (mode_ == AbstractionMode::ClassAgnostic) {
    return tables_.begin()->second;
  }
  if (!label) throw ValidationError("per-class abstraction needs a class label");
  const auto it = tables_.find(*label);
  if (it == tables_.end()) {
    throw ValidationError("class " + std::to_string(*label) + " was not fitted");
  }
  return it->second;
}

std::vector<std::int32_t> GaussianAbstraction::classes() const {
  std::vector<std::int32_t> out;
  if (mode_ == AbstractionMode::PerClass) {
    for (const auto& [label, e] : tables_) out.push_back(label);
  }
  return out;
}

bool operator==(const GaussianAbstraction& a, const GaussianAbstraction& b) {
  if (a.mode_ != b.mode_ || a.k_ != b.k_ || a.n_neurons_ != b.n_neurons_ ||
      a.monitored_ != b.monitored_ || a.tables_.size() != b.tables_.size()) {
    return false;
  }
  return std::equal(a.tables_.begin(), a.tables_.end(), b.tables_.begin(),
                    [](const auto& x, const auto& y) {
                      return x.first == y.first && x.second.stats == y.second.stats;
                    });
}

namespace {

NeuronStats column_stats(const TraceDataset& dataset, std::optional<std::int32_t> label) {
  const Index n = dataset.n_neurons();
  VectorXd sum = VectorXd::Zero(n);
  std::size_t count = 0;
  const auto selected = [&](const TraceRecord& r) { return !label || r.label == label; };
  for (const auto& r : dataset) {
    if (!selected(r)) continue;
    sum += r.activations.cast<double>();
    ++count;
  }
  const VectorXd mu = sum / static_cast<double>(count);
  VectorXd squares = VectorXd::Zero(n);
  for (const auto& r : dataset) {
    if (!selected(r)) continue;
    squares += (r.activations.cast<double>() - mu).cwiseAbs2();
  }
  return NeuronStats{mu, (squares / static_cast<double>(count - 1)).cwiseSqrt()};
}

}  // namespace

GaussianAbstraction fit(const TraceDataset& dataset, AbstractionMode mode, double k,
                        std::vector<Index> monitored) {
  validate_k(k);
  if (dataset.size() < 2) {
    throw ValidationError("fitting needs at least two records, got " +
                          std::to_string(dataset.size()));
  }
  if (mode == AbstractionMode::ClassAgnostic) {
    return GaussianAbstraction(column_stats(dataset, std::nullopt), k, std::move(monitored));
  }
  if (!dataset.all_labeled()) {
    throw ValidationError("per_class mode requires a class label on every record");
  }
  std::map<std::int32_t, std::size_t> counts;
  for (const auto& r : dataset) ++counts[*r.label];
  std::map<std::int32_t, NeuronStats> tables;
  for (const auto& [label, count] : counts) {
    if (count < 2) {
      throw ValidationError("class " + std::to_string(label) + " has " + std::to_string(count) +
                            " sample(s); per_class mode needs at least 2");
    }
    tables.emplace(label, column_stats(dataset, label));
  }
  return GaussianAbstraction(std::move(tables), k, std::move(monitored));
}

}  // namespace actmon
