#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string_view>
#include <vector>

#include "avgsde/model.hpp"

namespace avgsde {

/// Singular power-kernel interaction with a decaying time modulation:
///   b(t, x, mu) = [(1 + t)^{-alpha1} + 1] * int (x - y) / |x - y|^{alpha2} mu(dy).
struct PowerKernelParams {
  double alpha1 = 0.5;
  double alpha2 = 1.5;
  /// Kernel uses max(|x - y|, truncation_delta); 0 keeps the raw singularity.
  double truncation_delta = 0.0;

  void validate(std::size_t dim) const;
};

OscillatingDriftSpec power_kernel_drift(const PowerKernelParams& params, std::size_t dim);

/// N^{-1/d} / 10: a tenth of the typical inter-particle spacing.
double default_truncation_delta(std::size_t n_particles, std::size_t dim);

/// F : [-1, 1] x R^m -> R^d.
using InteractionFn = std::function<void(double u, std::span<const double> v, std::span<double> out)>;
/// phi : R^d x R^d -> R^m.
using FeatureFn =
    std::function<void(std::span<const double> x, std::span<const double> y, std::span<double> out)>;

struct FrequencyAtom {
  double location = 1.0;
  double mass = 1.0;
};

/// b(t, x, mu) = int F(sin(xi t), int phi(x, y) mu(dy)) nu(dxi) with atomic nu.
struct OscillatoryInteractionParams {
  InteractionFn F;
  FeatureFn phi;
  std::size_t feature_dim = 1;
  std::vector<FrequencyAtom> nu_atoms;
  double lipschitz = 1.0;  // L_F

  void validate() const;
};

OscillatingDriftSpec oscillatory_interaction_drift(const OscillatoryInteractionParams& params, std::size_t dim);

/// sum over nonzero atoms of w_i / |xi_i|.
double inverse_frequency_moment(std::span<const FrequencyAtom> atoms);
/// nu(R \ {0}) and nu({0}).
double nonzero_mass(std::span<const FrequencyAtom> atoms);
double zero_mass(std::span<const FrequencyAtom> atoms);

/// Probes |F(u, 0)| <= L_F and |F(u, v) - F(u, w)| <= L_F |v - w| on random points.
bool check_interaction_lipschitz(const OscillatoryInteractionParams& params, std::size_t dim,
                                 std::size_t probes, std::uint64_t seed);

/// A random member of the Lipschitz class:
///   F(u, v) = L_F * (a sin(k u + c) + M cos(q u) tanh(v)),  |a| <= 1, ||M||_F <= 1.
InteractionFn random_lipschitz_interaction(std::size_t dim, std::size_t feature_dim, double lipschitz,
                                           std::uint64_t seed);

/// phi(x, y) = tanh(x - y) componentwise (m = d).
FeatureFn tanh_difference_feature();

enum class BaselineKind { mean_reversion, sine_modulated };

/// mean_reversion: (1 + cos t)(mean(mu) - x), averaged mean(mu) - x.
/// sine_modulated: sin(t) tanh(x), averaged 0, independent of mu.
OscillatingDriftSpec smooth_baseline_drift(BaselineKind kind, std::size_t dim);
OscillatingDriftSpec smooth_baseline_drift(std::string_view kind, std::size_t dim);

/// b == bbar == value; the degenerate case where both systems coincide.
OscillatingDriftSpec constant_drift(State value);

}  // namespace avgsde
