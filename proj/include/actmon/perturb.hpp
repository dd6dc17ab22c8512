#pragma once

// Input corruptions used to produce out-of-distribution inputs. Inputs are
// flat image tensors with values in [0, 1]; every perturbation clips its
// result back into that range and is deterministic for a given seed.

#include <cstdint>
#include <optional>
#include <string_view>

#include "actmon/network.hpp"
#include "actmon/types.hpp"

namespace actmon {

enum class PerturbationKind { Gaussian, Impulse, Fgsm };

std::string_view to_string(PerturbationKind kind);
PerturbationKind parse_perturbation_kind(std::string_view name);

/// `level` is the variance for Gaussian noise, the corruption probability
/// for impulse noise and the mask multiplier for FGSM.
struct PerturbationSpec {
  PerturbationKind kind = PerturbationKind::Gaussian;
  double level = 0.0;
  std::uint64_t seed = 0;
};

/// Independent per-sample seed derived from a base seed (splitmix64).
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index) noexcept;

/// The i.i.d. N(0, variance) field that gaussian_noise adds before clipping.
VectorXd gaussian_noise_field(Index n, double variance, std::uint64_t seed);

VectorXd gaussian_noise(const Eigen::Ref<const VectorXd>& x, double variance, std::uint64_t seed);

/// Each element independently becomes 1 with probability p/2, 0 with
/// probability p/2, and is kept otherwise.
VectorXd impulse_noise(const Eigen::Ref<const VectorXd>& x, double p, std::uint64_t seed);

/// Single-step fast gradient sign attack against the squared error between
/// the network output and a target displaced from the clean output by a
/// seeded unit direction:
///   x' = clip(x + epsilon * sign(d/dx ||f(x) - (f(x) + u)||^2), 0, 1).
VectorXd fgsm(const Network<double>& net, const Eigen::Ref<const VectorXd>& x, double epsilon,
              std::uint64_t seed);

/// Dispatches on spec.kind. `net` is required for FGSM only.
VectorXd perturb(const PerturbationSpec& spec, const Eigen::Ref<const VectorXd>& x,
                 const Network<double>* net = nullptr);

}  // namespace actmon
