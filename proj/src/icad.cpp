#include "actmon/icad.hpp"

#include <algorithm>
#include <cmath>

#include "actmon/parallel.hpp"

namespace actmon {

CalibrationScores::CalibrationScores(std::vector<double> scores) : scores_(std::move(scores)) {
  if (scores_.empty()) throw ValidationError("calibration needs at least one score");
  for (double s : scores_) {
    if (!(s >= 0.0 && s <= 1.0)) throw ValidationError("calibration scores must lie in [0, 1]");
  }
  std::sort(scores_.begin(), scores_.end());
}

CalibrationScores calibrate(const GaussianAbstraction& abs, const TraceDataset& calibration) {
  if (calibration.empty()) throw ValidationError("calibration set is empty");
  if (calibration.n_neurons() != abs.n_neurons()) {
    throw ValidationError("calibration traces have " + std::to_string(calibration.n_neurons()) +
                          " neurons, abstraction expects " + std::to_string(abs.n_neurons()));
  }
  std::vector<double> scores(calibration.size());
  parallel_for(calibration.size(), [&](std::size_t i) {
    const auto& r = calibration[i];
    const auto label =
        abs.mode() == AbstractionMode::PerClass ? r.label : std::optional<std::int32_t>{};
    scores[i] = nonconformity(abs, r.activations, label).value;
  });
  return CalibrationScores(std::move(scores));
}

PValue p_value(const CalibrationScores& cal, double score) {
  const auto& s = cal.scores();
  const auto first_ge = std::lower_bound(s.begin(), s.end(), score);
  return {static_cast<std::size_t>(s.end() - first_ge), s.size()};
}

PValue cad_p_value(const TraceDataset& training, const Eigen::Ref<const ActivationVector>& x,
                   double k) {
  const std::size_t m = training.size();
  if (m < 3) throw ValidationError("full conformal p-value needs at least 3 training records");
  const auto reference = fit(training, AbstractionMode::ClassAgnostic, k);
  const double test_score = nonconformity(reference, x).value;

  std::size_t at_least = 0;
  for (std::size_t i = 0; i < m; ++i) {
    TraceDataset rest(training.n_neurons());
    rest.reserve(m - 1);
    for (std::size_t j = 0; j < m; ++j) {
      if (j != i) rest.add(training[j]);
    }
    const auto loo = fit(rest, AbstractionMode::ClassAgnostic, k);
    if (nonconformity(loo, training[i].activations).value >= test_score) ++at_least;
  }
  return {at_least, m};
}

}  // namespace actmon
