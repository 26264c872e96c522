#include "avgsde/drift_library.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include <fmt/format.h>

#include "avgsde/error.hpp"

namespace avgsde {

// ---------------------------------------------------------------------------
// Power kernel

void PowerKernelParams::validate(std::size_t dim) const {
  const double upper = std::min(2.0, 1.0 + static_cast<double>(dim) / 2.0);
  if (!(alpha1 > 0.0)) throw ArgumentError(fmt::format("power kernel: alpha1 = {} must be positive", alpha1));
  if (!(alpha2 > 1.0 && alpha2 < upper))
    throw ArgumentError(fmt::format("power kernel: alpha2 = {} must lie in (1, {})", alpha2, upper));
  if (!(truncation_delta >= 0.0)) throw ArgumentError("power kernel: truncation_delta must be nonnegative");
}

double default_truncation_delta(std::size_t n_particles, std::size_t dim) {
  if (n_particles == 0 || dim == 0) throw ArgumentError("default_truncation_delta: empty system");
  return std::pow(static_cast<double>(n_particles), -1.0 / static_cast<double>(dim)) / 10.0;
}

namespace {

double distance(std::span<const double> x, std::span<const double> y) {
  double s = 0.0;
  for (std::size_t k = 0; k < x.size(); ++k) s += (x[k] - y[k]) * (x[k] - y[k]);
  return std::sqrt(s);
}

// int (x - y) / max(|x - y|, delta)^{alpha2} mu(dy)
void power_interaction(std::span<const double> x, const EmpiricalMeasure& mu, double alpha2, double delta,
                       std::span<double> out) {
  std::fill(out.begin(), out.end(), 0.0);
  for (std::size_t j = 0; j < mu.size(); ++j) {
    const auto y = mu.particle(j);
    const double r = distance(x, y);
    const double scale = std::max(r, delta);
    if (scale == 0.0)
      throw SingularEvaluationError(fmt::format("power kernel evaluated at particle {} with no truncation", j));
    const double factor = mu.weight(j) / std::pow(scale, alpha2);
    for (std::size_t k = 0; k < x.size(); ++k) out[k] += factor * (x[k] - y[k]);
  }
}

}  // namespace

OscillatingDriftSpec power_kernel_drift(const PowerKernelParams& params, std::size_t dim) {
  params.validate(dim);
  const double a1 = params.alpha1;
  const double a2 = params.alpha2;
  const double delta = params.truncation_delta;

  OscillatingDriftSpec spec;
  spec.name = "power_kernel";
  spec.dim = dim;
  spec.truncation_delta = delta;
  spec.fast_drift = [a1, a2, delta](double t, std::span<const double> x, const EmpiricalMeasure& mu,
                                    std::span<double> out) {
    power_interaction(x, mu, a2, delta, out);
    const double prefactor = std::pow(1.0 + t, -a1) + 1.0;
    for (double& c : out) c *= prefactor;
  };
  spec.averaged_drift = [a2, delta](std::span<const double> x, const EmpiricalMeasure& mu,
                                    std::span<double> out) { power_interaction(x, mu, a2, delta, out); };

  // (1/T) int_t^{t+T} (1+s)^{-a1} ds <= T^{-a1}/(1-a1) for a1 < 1 and
  // <= T^{-1}/(a1-1) for a1 > 1. For a1 = 1 the integral is ln(1+T)/T, which
  // is below ln(1+e) * max(1, ln T)/T for every T > 0.
  double envelope_factor = 0.0;
  if (a1 == 1.0) {
    spec.omega = [](double t) { return std::max(1.0, std::log(t)) / t; };
    envelope_factor = std::log1p(std::numbers::e);
  } else {
    const double rate = std::min(a1, 1.0);
    spec.omega = [rate](double t) { return std::pow(t, -rate); };
    envelope_factor = 1.0 / std::abs(1.0 - a1);
  }
  spec.envelope = [envelope_factor, a2, delta](std::span<const double> x, const EmpiricalMeasure& mu) {
    double sum = 0.0;
    for (std::size_t j = 0; j < mu.size(); ++j) {
      const double r = distance(x, mu.particle(j));
      const double scale = std::max(r, delta);
      if (scale == 0.0) return std::numeric_limits<double>::infinity();
      sum += mu.weight(j) * r / std::pow(scale, a2);
    }
    return envelope_factor * sum;
  };
  // Supremal integrability exponent: |x|^{1-alpha2} is locally L^p only for
  // p < d/(alpha2 - 1), so this value is not attained.
  spec.p0 = static_cast<double>(dim) / (a2 - 1.0);
  return spec;
}

// ---------------------------------------------------------------------------
// Oscillatory interaction

double inverse_frequency_moment(std::span<const FrequencyAtom> atoms) {
  double s = 0.0;
  for (const auto& a : atoms)
    if (a.location != 0.0) s += a.mass / std::abs(a.location);
  return s;
}

double nonzero_mass(std::span<const FrequencyAtom> atoms) {
  double s = 0.0;
  for (const auto& a : atoms)
    if (a.location != 0.0) s += a.mass;
  return s;
}

double zero_mass(std::span<const FrequencyAtom> atoms) {
  double s = 0.0;
  for (const auto& a : atoms)
    if (a.location == 0.0) s += a.mass;
  return s;
}

void OscillatoryInteractionParams::validate() const {
  if (!F || !phi) throw ArgumentError("oscillatory interaction: F and phi are required");
  if (feature_dim == 0) throw ArgumentError("oscillatory interaction: feature dimension must be positive");
  if (!(lipschitz > 0.0)) throw ArgumentError("oscillatory interaction: L_F must be positive");
  if (nu_atoms.empty()) throw ArgumentError("oscillatory interaction: nu needs at least one atom");
  for (const auto& a : nu_atoms) {
    if (!(a.mass >= 0.0) || !std::isfinite(a.mass))
      throw ArgumentError("oscillatory interaction: atom masses must be nonnegative");
    if (!std::isfinite(a.location)) throw ArgumentError("oscillatory interaction: atom locations must be finite");
  }
}

namespace {

constexpr std::size_t kPeriodicNodes = 64;

void mean_feature(const FeatureFn& phi, std::size_t m, std::span<const double> x, const EmpiricalMeasure& mu,
                  std::span<double> v, std::span<double> scratch) {
  std::fill(v.begin(), v.end(), 0.0);
  for (std::size_t j = 0; j < mu.size(); ++j) {
    phi(x, mu.particle(j), scratch);
    for (std::size_t k = 0; k < m; ++k) v[k] += mu.weight(j) * scratch[k];
  }
}

}  // namespace

OscillatingDriftSpec oscillatory_interaction_drift(const OscillatoryInteractionParams& params, std::size_t dim) {
  params.validate();
  const auto F = params.F;
  const auto phi = params.phi;
  const auto atoms = params.nu_atoms;
  const std::size_t m = params.feature_dim;

  OscillatingDriftSpec spec;
  spec.name = "oscillatory_interaction";
  spec.dim = dim;
  spec.fast_drift = [F, phi, atoms, m, dim](double t, std::span<const double> x, const EmpiricalMeasure& mu,
                                            std::span<double> out) {
    std::vector<double> v(m), scratch(std::max(m, dim));
    mean_feature(phi, m, x, mu, v, std::span(scratch).first(m));
    std::fill(out.begin(), out.end(), 0.0);
    auto value = std::span(scratch).first(dim);
    for (const auto& a : atoms) {
      F(std::sin(a.location * t), v, value);
      for (std::size_t k = 0; k < dim; ++k) out[k] += a.mass * value[k];
    }
  };

  const double mass_nonzero = nonzero_mass(atoms);
  const double mass_zero = zero_mass(atoms);
  spec.averaged_drift = [F, phi, m, dim, mass_nonzero, mass_zero](std::span<const double> x,
                                                                 const EmpiricalMeasure& mu,
                                                                 std::span<double> out) {
    std::vector<double> v(m), scratch(std::max(m, dim));
    mean_feature(phi, m, x, mu, v, std::span(scratch).first(m));
    std::fill(out.begin(), out.end(), 0.0);
    auto value = std::span(scratch).first(dim);
    // Equispaced nodes integrate trigonometric polynomials of degree < 64 exactly.
    for (std::size_t j = 0; j < kPeriodicNodes; ++j) {
      const double tau = 2.0 * std::numbers::pi * static_cast<double>(j) / static_cast<double>(kPeriodicNodes);
      F(std::sin(tau), v, value);
      for (std::size_t k = 0; k < dim; ++k) out[k] += value[k];
    }
    for (double& c : out) c *= mass_nonzero / static_cast<double>(kPeriodicNodes);
    if (mass_zero > 0.0) {
      F(0.0, v, value);
      for (std::size_t k = 0; k < dim; ++k) out[k] += mass_zero * value[k];
    }
  };

  const double omega_constant = 4.0 * std::numbers::pi * params.lipschitz * inverse_frequency_moment(atoms);
  spec.omega = [omega_constant](double T) { return omega_constant / T; };
  spec.envelope = [phi, m](std::span<const double> x, const EmpiricalMeasure& mu) {
    std::vector<double> scratch(m);
    double s = 0.0;
    for (std::size_t j = 0; j < mu.size(); ++j) {
      phi(x, mu.particle(j), scratch);
      double n2 = 0.0;
      for (double c : scratch) n2 += c * c;
      s += mu.weight(j) * std::sqrt(n2);
    }
    return 1.0 + s;
  };

  double max_freq = 0.0;
  for (const auto& a : atoms) max_freq = std::max(max_freq, std::abs(a.location));
  if (max_freq > 0.0) spec.shortest_period = 2.0 * std::numbers::pi / max_freq;
  return spec;
}

bool check_interaction_lipschitz(const OscillatoryInteractionParams& params, std::size_t dim, std::size_t probes,
                                 std::uint64_t seed) {
  params.validate();
  std::mt19937_64 gen(seed);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 3.0);
  const std::size_t m = params.feature_dim;
  std::vector<double> v(m), w(m), zero(m, 0.0), fv(dim), fw(dim);
  const double slack = 1.0 + 1e-12;
  for (std::size_t n = 0; n < probes; ++n) {
    const double u = unit(gen);
    for (std::size_t k = 0; k < m; ++k) {
      v[k] = gauss(gen);
      w[k] = gauss(gen);
    }
    params.F(u, zero, fv);
    double f0 = 0.0;
    for (double c : fv) f0 += c * c;
    if (std::sqrt(f0) > params.lipschitz * slack) return false;
    params.F(u, v, fv);
    params.F(u, w, fw);
    double df = 0.0, dx = 0.0;
    for (std::size_t k = 0; k < dim; ++k) df += (fv[k] - fw[k]) * (fv[k] - fw[k]);
    for (std::size_t k = 0; k < m; ++k) dx += (v[k] - w[k]) * (v[k] - w[k]);
    if (std::sqrt(df) > params.lipschitz * std::sqrt(dx) * slack) return false;
  }
  return true;
}

InteractionFn random_lipschitz_interaction(std::size_t dim, std::size_t feature_dim, double lipschitz,
                                           std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> gauss;
  std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
  std::uniform_real_distribution<double> freq(0.5, 3.0);
  std::uniform_real_distribution<double> shrink(0.2, 1.0);

  std::vector<double> a(dim), k(dim), c(dim), M(dim * feature_dim);
  for (auto& e : a) e = gauss(gen);
  for (auto& e : M) e = gauss(gen);
  double na = 0.0, nm = 0.0;
  for (double e : a) na += e * e;
  for (double e : M) nm += e * e;
  const double sa = shrink(gen) / std::sqrt(na);
  const double sm = shrink(gen) / std::sqrt(nm);
  for (auto& e : a) e *= sa;
  for (auto& e : M) e *= sm;
  for (auto& e : k) e = freq(gen);
  for (auto& e : c) e = phase(gen);
  const double q = freq(gen);

  return [=](double u, std::span<const double> v, std::span<double> out) {
    const double modulation = std::cos(q * u);
    for (std::size_t i = 0; i < dim; ++i) {
      double s = a[i] * std::sin(k[i] * u + c[i]);
      for (std::size_t j = 0; j < feature_dim; ++j) s += modulation * M[i * feature_dim + j] * std::tanh(v[j]);
      out[i] = lipschitz * s;
    }
  };
}

FeatureFn tanh_difference_feature() {
  return [](std::span<const double> x, std::span<const double> y, std::span<double> out) {
    for (std::size_t k = 0; k < x.size(); ++k) out[k] = std::tanh(x[k] - y[k]);
  };
}

// ---------------------------------------------------------------------------
// Smooth baselines

OscillatingDriftSpec smooth_baseline_drift(BaselineKind kind, std::size_t dim) {
  if (dim == 0) throw ArgumentError("baseline drift: dimension must be positive");
  OscillatingDriftSpec spec;
  spec.dim = dim;
  spec.p0 = std::numeric_limits<double>::infinity();
  spec.shortest_period = 2.0 * std::numbers::pi;
  // |(1/T) int_t^{t+T} cos s ds| and |(1/T) int_t^{t+T} sin s ds| are <= 2/T.
  spec.omega = [](double t) { return 2.0 / t; };
  switch (kind) {
    case BaselineKind::mean_reversion:
      spec.name = "mean_reversion";
      spec.fast_drift = [](double t, std::span<const double> x, const EmpiricalMeasure& mu, std::span<double> out) {
        const double prefactor = 1.0 + std::cos(t);
        const auto m = mu.mean();
        for (std::size_t k = 0; k < x.size(); ++k) out[k] = prefactor * (m[k] - x[k]);
      };
      spec.averaged_drift = [](std::span<const double> x, const EmpiricalMeasure& mu, std::span<double> out) {
        const auto m = mu.mean();
        for (std::size_t k = 0; k < x.size(); ++k) out[k] = m[k] - x[k];
      };
      spec.envelope = [](std::span<const double> x, const EmpiricalMeasure& mu) {
        const auto m = mu.mean();
        double s = 0.0;
        for (std::size_t k = 0; k < x.size(); ++k) s += (m[k] - x[k]) * (m[k] - x[k]);
        return std::sqrt(s);
      };
      break;
    case BaselineKind::sine_modulated:
      spec.name = "sine_modulated";
      spec.measure_dependent = false;
      spec.fast_drift = [](double t, std::span<const double> x, const EmpiricalMeasure&, std::span<double> out) {
        const double prefactor = std::sin(t);
        for (std::size_t k = 0; k < x.size(); ++k) out[k] = prefactor * std::tanh(x[k]);
      };
      spec.averaged_drift = [](std::span<const double>, const EmpiricalMeasure&, std::span<double> out) {
        std::fill(out.begin(), out.end(), 0.0);
      };
      spec.envelope = [](std::span<const double> x, const EmpiricalMeasure&) {
        double s = 0.0;
        for (double c : x) s += std::tanh(c) * std::tanh(c);
        return std::sqrt(s);
      };
      break;
  }
  return spec;
}

OscillatingDriftSpec smooth_baseline_drift(std::string_view kind, std::size_t dim) {
  if (kind == "mean_reversion") return smooth_baseline_drift(BaselineKind::mean_reversion, dim);
  if (kind == "sine_modulated") return smooth_baseline_drift(BaselineKind::sine_modulated, dim);
  throw ArgumentError(fmt::format("unknown baseline drift kind '{}'", kind));
}

OscillatingDriftSpec constant_drift(State value) {
  if (value.empty()) throw ArgumentError("constant drift: dimension must be positive");
  OscillatingDriftSpec spec;
  spec.name = "constant";
  spec.dim = value.size();
  spec.measure_dependent = false;
  spec.fast_drift = [value](double, std::span<const double>, const EmpiricalMeasure&, std::span<double> out) {
    std::copy(value.begin(), value.end(), out.begin());
  };
  spec.averaged_drift = [value](std::span<const double>, const EmpiricalMeasure&, std::span<double> out) {
    std::copy(value.begin(), value.end(), out.begin());
  };
  spec.omega = [](double t) { return 1.0 / t; };
  spec.envelope = [](std::span<const double>, const EmpiricalMeasure&) { return 0.0; };
  return spec;
}

}  // namespace avgsde
