#include "avgsde/model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include <fmt/format.h>

#include "avgsde/error.hpp"

namespace avgsde {

// ---------------------------------------------------------------------------
// EmpiricalMeasure

EmpiricalMeasure::EmpiricalMeasure(std::size_t dim, std::vector<double> particles)
    : dim_(dim), particles_(std::move(particles)) {
  if (dim_ == 0) throw ArgumentError("EmpiricalMeasure: dimension must be positive");
  const std::size_t n = particles_.size() / dim_;
  weights_.assign(n, n == 0 ? 0.0 : 1.0 / static_cast<double>(n));
  validate_and_cache();
}

EmpiricalMeasure::EmpiricalMeasure(std::size_t dim, std::vector<double> particles,
                                   std::vector<double> weights)
    : dim_(dim), particles_(std::move(particles)), weights_(std::move(weights)) {
  if (dim_ == 0) throw ArgumentError("EmpiricalMeasure: dimension must be positive");
  validate_and_cache();
  const double total = std::accumulate(weights_.begin(), weights_.end(), 0.0);
  if (std::abs(total - 1.0) > 1e-12)
    throw ArgumentError(fmt::format("EmpiricalMeasure: weights sum to {:.17g}, expected 1", total));
}

EmpiricalMeasure EmpiricalMeasure::normalized(std::size_t dim, std::vector<double> particles,
                                              std::vector<double> raw_weights) {
  const double total = std::accumulate(raw_weights.begin(), raw_weights.end(), 0.0);
  if (!(total > 0.0) || !std::isfinite(total))
    throw ArgumentError("EmpiricalMeasure: weights must have a positive finite sum");
  for (double& w : raw_weights) w /= total;
  return EmpiricalMeasure(dim, std::move(particles), std::move(raw_weights));
}

EmpiricalMeasure EmpiricalMeasure::dirac(std::span<const double> point) {
  return EmpiricalMeasure(point.size(), std::vector<double>(point.begin(), point.end()));
}

EmpiricalMeasure EmpiricalMeasure::from_points(const std::vector<State>& points) {
  if (points.empty()) throw ArgumentError("EmpiricalMeasure: at least one particle required");
  const std::size_t dim = points.front().size();
  std::vector<double> flat;
  flat.reserve(points.size() * dim);
  for (const auto& p : points) {
    if (p.size() != dim) throw ArgumentError("EmpiricalMeasure: inconsistent particle dimensions");
    flat.insert(flat.end(), p.begin(), p.end());
  }
  return EmpiricalMeasure(dim, std::move(flat));
}

void EmpiricalMeasure::validate_and_cache() {
  if (particles_.size() % dim_ != 0)
    throw ArgumentError("EmpiricalMeasure: particle array length is not a multiple of dim");
  const std::size_t n = particles_.size() / dim_;
  if (n == 0) throw ArgumentError("EmpiricalMeasure: at least one particle required");
  if (weights_.size() != n) throw ArgumentError("EmpiricalMeasure: one weight per particle required");
  for (double w : weights_)
    if (!(w >= 0.0) || !std::isfinite(w)) throw ArgumentError("EmpiricalMeasure: weights must be nonnegative");
  mean_.assign(dim_, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t k = 0; k < dim_; ++k) mean_[k] += weights_[i] * particles_[i * dim_ + k];
}

// ---------------------------------------------------------------------------
// Specs

State OscillatingDriftSpec::fast(double t, std::span<const double> x, const EmpiricalMeasure& mu) const {
  State out(dim, 0.0);
  fast_drift(t, x, mu, out);
  return out;
}

State OscillatingDriftSpec::averaged(std::span<const double> x, const EmpiricalMeasure& mu) const {
  if (!averaged_drift) throw ConfigurationError(fmt::format("drift '{}' has no averaged drift", name));
  State out(dim, 0.0);
  averaged_drift(x, mu, out);
  return out;
}

std::vector<double> DiffusionSpec::matrix(std::span<const double> x) const {
  std::vector<double> out(dim * dim, 0.0);
  sigma(x, out);
  return out;
}

DiffusionSpec scaled_identity_diffusion(std::size_t dim, double scale) {
  if (!(scale > 0.0)) throw ArgumentError("diffusion scale must be positive");
  DiffusionSpec d;
  d.dim = dim;
  d.sigma = [dim, scale](std::span<const double>, std::span<double> out) {
    std::fill(out.begin(), out.end(), 0.0);
    for (std::size_t i = 0; i < dim; ++i) out[i * dim + i] = scale;
  };
  // Smallest kappa1 > 1 with kappa1^{-1} <= scale <= kappa1.
  d.kappa1 = std::max({scale, 1.0 / scale, 1.0 + 1e-12});
  d.beta_holder = 0.5;
  d.scalar_multiple = scale;
  return d;
}

DiffusionSpec oscillating_diagonal_diffusion(std::size_t dim, double scale, double amplitude) {
  if (!(scale > 0.0)) throw ArgumentError("diffusion scale must be positive");
  if (!(amplitude >= 0.0 && amplitude < 1.0)) throw ArgumentError("diffusion amplitude must lie in [0, 1)");
  DiffusionSpec d;
  d.dim = dim;
  d.sigma = [dim, scale, amplitude](std::span<const double> x, std::span<double> out) {
    std::fill(out.begin(), out.end(), 0.0);
    for (std::size_t i = 0; i < dim; ++i) out[i * dim + i] = scale * (1.0 + amplitude * std::sin(x[i]));
  };
  const double lo = scale * (1.0 - amplitude);
  const double hi = scale * (1.0 + amplitude);
  d.kappa1 = std::max({hi, 1.0 / lo, 1.0 + 1e-12});
  d.beta_holder = 0.5;
  return d;
}

// ---------------------------------------------------------------------------
// Averaging

namespace {

void require_finite(std::span<const double> v, std::size_t node, double s) {
  for (double c : v)
    if (!std::isfinite(c))
      throw EvaluationError(fmt::format("non-finite drift value at quadrature node {} (s = {:.17g})", node, s));
}

}  // namespace

State numeric_average(const OscillatingDriftSpec& spec, std::span<const double> x,
                      const EmpiricalMeasure& mu, double t0, double T_avg, std::size_t quad_n) {
  if (!(T_avg > 0.0)) throw ArgumentError("numeric_average: T_avg must be positive");
  if (quad_n < 2) throw ArgumentError("numeric_average: quad_n must be at least 2");
  if (spec.shortest_period && *spec.shortest_period > 0.0) {
    const double required = 20.0 * T_avg / *spec.shortest_period;
    if (static_cast<double>(quad_n) < required)
      throw ArgumentError(fmt::format(
          "numeric_average: quad_n = {} does not resolve the oscillation (need >= {:.0f})", quad_n,
          std::ceil(required)));
  }
  const double step = T_avg / static_cast<double>(quad_n);
  State sum(spec.dim, 0.0);
  State value(spec.dim, 0.0);
  for (std::size_t i = 0; i < quad_n; ++i) {
    const double s = t0 + (static_cast<double>(i) + 0.5) * step;
    spec.fast_drift(s, x, mu, value);
    require_finite(value, i, s);
    for (std::size_t k = 0; k < spec.dim; ++k) sum[k] += value[k];
  }
  for (double& c : sum) c /= static_cast<double>(quad_n);
  return sum;
}

double kbm_deficiency(const OscillatingDriftSpec& spec, std::span<const double> x,
                      const EmpiricalMeasure& mu, double t0, double T_avg, std::size_t quad_n) {
  if (!spec.has_averaged_drift())
    throw ConfigurationError(fmt::format("kbm_deficiency: drift '{}' has no averaged drift", spec.name));
  const State avg = numeric_average(spec, x, mu, t0, T_avg, quad_n);
  const State bar = spec.averaged(x, mu);
  double sq = 0.0;
  for (std::size_t k = 0; k < spec.dim; ++k) sq += (avg[k] - bar[k]) * (avg[k] - bar[k]);
  return std::sqrt(sq);
}

OscillatingDriftSpec with_numeric_average(OscillatingDriftSpec spec, double T_avg, std::size_t quad_n) {
  if (!(T_avg > 0.0) || quad_n < 2) throw ArgumentError("with_numeric_average: invalid quadrature");
  auto base = spec;
  spec.averaged_drift = [base, T_avg, quad_n](std::span<const double> x, const EmpiricalMeasure& mu,
                                              std::span<double> out) {
    const State avg = numeric_average(base, x, mu, 0.0, T_avg, quad_n);
    std::copy(avg.begin(), avg.end(), out.begin());
  };
  return spec;
}

// ---------------------------------------------------------------------------
// Localized L^p norm

GridField GridField::sample(std::size_t dim, double lo, double hi, std::size_t cells_per_dim,
                            const std::function<double(std::span<const double>)>& f) {
  if (dim == 0 || cells_per_dim == 0 || !(hi > lo)) throw ArgumentError("GridField::sample: empty window");
  GridField g;
  g.dim = dim;
  g.origin.assign(dim, lo);
  g.spacing = (hi - lo) / static_cast<double>(cells_per_dim);
  g.counts.assign(dim, cells_per_dim);
  std::size_t total = 1;
  for (std::size_t k = 0; k < dim; ++k) total *= cells_per_dim;
  g.values.resize(total);
  for (std::size_t i = 0; i < total; ++i) {
    const State x = g.cell_center(i);
    g.values[i] = f(x);
  }
  return g;
}

State GridField::cell_center(std::size_t flat_index) const {
  State x(dim);
  for (std::size_t k = dim; k-- > 0;) {
    const std::size_t idx = flat_index % counts[k];
    flat_index /= counts[k];
    x[k] = origin[k] + (static_cast<double>(idx) + 0.5) * spacing;
  }
  return x;
}

double cutoff_bump(double radius) {
  const auto g = [](double s) { return s > 0.0 ? std::exp(-1.0 / s) : 0.0; };
  if (radius <= 1.0) return 1.0;
  if (radius >= 2.0) return 0.0;
  const double a = g(2.0 - radius);
  const double b = g(radius - 1.0);
  return a / (a + b);
}

std::vector<State> default_centers(const GridField& field) {
  std::vector<State> centers{State{}};
  for (std::size_t k = 0; k < field.dim; ++k) {
    const double lo = field.origin[k];
    const double hi = lo + field.spacing * static_cast<double>(field.counts[k]);
    std::vector<State> next;
    for (double z = std::floor(lo); z <= std::ceil(hi); z += 1.0)
      for (const auto& c : centers) {
        State e = c;
        e.push_back(z);
        next.push_back(std::move(e));
      }
    centers = std::move(next);
  }
  return centers;
}

double localized_lp_norm(const GridField& field, double p, double r, const std::vector<State>& centers) {
  if (centers.empty()) throw ArgumentError("localized_lp_norm: empty centers list");
  if (!(p > 1.0) || !std::isfinite(p)) throw ArgumentError("localized_lp_norm: p must lie in (1, inf)");
  if (!(r > 0.0)) throw ArgumentError("localized_lp_norm: cutoff radius must be positive");
  if (field.counts.size() != field.dim || field.origin.size() != field.dim)
    throw ArgumentError("localized_lp_norm: malformed grid");

  const double cell_volume = std::pow(field.spacing, static_cast<double>(field.dim));
  double best = 0.0;
  std::vector<std::size_t> lo(field.dim), hi(field.dim), idx(field.dim);
  for (const auto& z : centers) {
    if (z.size() != field.dim) throw ArgumentError("localized_lp_norm: center dimension mismatch");
    // Index box covering the support ball |x - z| < 2r.
    bool empty = false;
    for (std::size_t k = 0; k < field.dim; ++k) {
      const double a = (z[k] - 2.0 * r - field.origin[k]) / field.spacing - 0.5;
      const double b = (z[k] + 2.0 * r - field.origin[k]) / field.spacing - 0.5;
      const double n = static_cast<double>(field.counts[k]);
      const double a_clamped = std::clamp(std::ceil(a), 0.0, n);
      const double b_clamped = std::clamp(std::floor(b), -1.0, n - 1.0);
      if (b_clamped < a_clamped) {
        empty = true;
        break;
      }
      lo[k] = static_cast<std::size_t>(a_clamped);
      hi[k] = static_cast<std::size_t>(b_clamped);
    }
    if (empty) continue;

    double acc = 0.0;
    idx = lo;
    for (;;) {
      std::size_t flat = 0;
      double dist2 = 0.0;
      for (std::size_t k = 0; k < field.dim; ++k) {
        flat = flat * field.counts[k] + idx[k];
        const double xk = field.origin[k] + (static_cast<double>(idx[k]) + 0.5) * field.spacing;
        dist2 += (xk - z[k]) * (xk - z[k]);
      }
      const double chi = cutoff_bump(std::sqrt(dist2) / r);
      if (chi > 0.0) acc += std::pow(std::abs(chi * field.values[flat]), p);
      // Odometer increment over the index box.
      std::size_t k = field.dim;
      while (k-- > 0) {
        if (idx[k] < hi[k]) {
          ++idx[k];
          break;
        }
        idx[k] = lo[k];
      }
      if (k == static_cast<std::size_t>(-1)) break;
    }
    best = std::max(best, std::pow(acc * cell_volume, 1.0 / p));
  }
  return best;
}

double localized_lp_norm(const GridField& field, double p, double r) {
  return localized_lp_norm(field, p, r, default_centers(field));
}

// ---------------------------------------------------------------------------
// Hypothesis checks

bool omega_decays(const OmegaFn& omega, double t_min, double t_max, std::size_t points,
                  double tail_tolerance) {
  if (points < 2 || !(t_max > t_min) || !(t_min > 0.0)) throw ArgumentError("omega_decays: invalid grid");
  const double ratio = std::log(t_max / t_min) / static_cast<double>(points - 1);
  double previous = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < points; ++i) {
    const double t = t_min * std::exp(ratio * static_cast<double>(i));
    const double w = omega(t);
    if (!(w >= 0.0) || !std::isfinite(w)) return false;
    if (w > previous * (1.0 + 1e-12)) return false;
    previous = w;
  }
  return previous <= tail_tolerance;
}

EllipticityReport check_ellipticity(const DiffusionSpec& diff, std::size_t probes, std::uint64_t seed,
                                    double radius) {
  std::mt19937_64 gen(seed);
  std::uniform_real_distribution<double> box(-radius, radius);
  std::normal_distribution<double> gauss;
  EllipticityReport rep;
  const std::size_t d = diff.dim;
  State x(d), xi(d), image(d);
  std::vector<double> m(d * d);
  for (std::size_t n = 0; n < probes; ++n) {
    for (auto& c : x) c = box(gen);
    double xi_norm2 = 0.0;
    for (auto& c : xi) {
      c = gauss(gen);
      xi_norm2 += c * c;
    }
    diff.sigma(x, m);
    double img2 = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < d; ++j) s += m[i * d + j] * xi[j];
      img2 += s * s;
    }
    const double ratio = std::sqrt(img2 / xi_norm2);
    rep.min_ratio = std::min(rep.min_ratio, ratio);
    rep.max_ratio = std::max(rep.max_ratio, ratio);
  }
  const double slack = 1e-12;
  rep.ok = rep.min_ratio >= 1.0 / diff.kappa1 - slack && rep.max_ratio <= diff.kappa1 + slack;
  return rep;
}

}  // namespace avgsde
