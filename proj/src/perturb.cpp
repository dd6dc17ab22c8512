#include "actmon/perturb.hpp"

#include <cmath>
#include <random>
#include <string>

#include "actmon/error.hpp"

namespace actmon {

namespace {

void require_unit_range(const Eigen::Ref<const VectorXd>& x) {
  if (!x.allFinite() || (x.array() < 0.0).any() || (x.array() > 1.0).any()) {
    throw InvalidArgument("perturbation input must lie in [0, 1]");
  }
}

VectorXd clip_unit(const VectorXd& v) { return v.cwiseMax(0.0).cwiseMin(1.0); }

}  // namespace

std::string_view to_string(PerturbationKind kind) {
  switch (kind) {
    case PerturbationKind::Gaussian: return "gaussian";
    case PerturbationKind::Impulse: return "impulse";
    case PerturbationKind::Fgsm: return "fgsm";
  }
  return "unknown";
}

PerturbationKind parse_perturbation_kind(std::string_view name) {
  if (name == "gaussian") return PerturbationKind::Gaussian;
  if (name == "impulse") return PerturbationKind::Impulse;
  if (name == "fgsm") return PerturbationKind::Fgsm;
  throw InvalidArgument("unknown perturbation kind '" + std::string(name) + "'");
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index) noexcept {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (index + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

VectorXd gaussian_noise_field(Index n, double variance, std::uint64_t seed) {
  if (!(variance >= 0.0) || !std::isfinite(variance)) {
    throw InvalidArgument("noise variance must be finite and >= 0");
  }
  if (variance == 0.0) return VectorXd::Zero(n);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, std::sqrt(variance));
  VectorXd noise(n);
  for (auto& v : noise) v = normal(rng);
  return noise;
}

VectorXd gaussian_noise(const Eigen::Ref<const VectorXd>& x, double variance, std::uint64_t seed) {
  require_unit_range(x);
  return clip_unit(x + gaussian_noise_field(x.size(), variance, seed));
}

VectorXd impulse_noise(const Eigen::Ref<const VectorXd>& x, double p, std::uint64_t seed) {
  if (!(p >= 0.0 && p <= 1.0)) throw InvalidArgument("impulse probability must lie in [0, 1]");
  require_unit_range(x);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  VectorXd out = x;
  for (auto& v : out) {
    const double u = uniform(rng);
    if (u < 0.5 * p) {
      v = 1.0;
    } else if (u < p) {
      v = 0.0;
    }
  }
  return out;
}

VectorXd fgsm(const Network<double>& net, const Eigen::Ref<const VectorXd>& x, double epsilon,
              std::uint64_t seed) {
  if (!(epsilon >= 0.0) || !std::isfinite(epsilon)) {
    throw InvalidArgument("FGSM epsilon must be finite and >= 0");
  }
  require_unit_range(x);
  const VectorXd clean = forward(net, x);

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  VectorXd direction(clean.size());
  for (auto& v : direction) v = normal(rng);
  direction.normalize();

  const VectorXd grad = input_gradient(net, x, clean + direction);
  const VectorXd mask = grad.unaryExpr([](double g) { return double((g > 0.0) - (g < 0.0)); });
  return clip_unit(x + epsilon * mask);
}

VectorXd perturb(const PerturbationSpec& spec, const Eigen::Ref<const VectorXd>& x,
                 const Network<double>* net) {
  switch (spec.kind) {
    case PerturbationKind::Gaussian: return gaussian_noise(x, spec.level, spec.seed);
    case PerturbationKind::Impulse: return impulse_noise(x, spec.level, spec.seed);
    case PerturbationKind::Fgsm:
      if (net == nullptr) throw InvalidArgument("FGSM needs a network");
      return fgsm(*net, x, spec.level, spec.seed);
  }
  throw InvalidArgument("unknown perturbation kind");
}

}  // namespace actmon
