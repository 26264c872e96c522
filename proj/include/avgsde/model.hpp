#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace avgsde {

using State = std::vector<double>;

/// Finitely supported probability measure on R^d: the N-particle proxy for a
/// time marginal law. Immutable after construction; the weighted mean is
/// computed once because most drifts need it.
class EmpiricalMeasure {
 public:
  /// Uniform weights 1/N. `particles` is row-major, N x dim.
  EmpiricalMeasure(std::size_t dim, std::vector<double> particles);
  /// Explicit weights; they must be nonnegative and sum to 1 within 1e-12.
  EmpiricalMeasure(std::size_t dim, std::vector<double> particles, std::vector<double> weights);

  /// Divides arbitrary nonnegative weights by their sum.
  static EmpiricalMeasure normalized(std::size_t dim, std::vector<double> particles,
                                     std::vector<double> raw_weights);
  static EmpiricalMeasure dirac(std::span<const double> point);
  static EmpiricalMeasure from_points(const std::vector<State>& points);

  std::size_t dim() const { return dim_; }
  std::size_t size() const { return weights_.size(); }
  std::span<const double> particle(std::size_t i) const {
    return {particles_.data() + i * dim_, dim_};
  }
  double weight(std::size_t i) const { return weights_[i]; }
  std::span<const double> particles() const { return particles_; }
  std::span<const double> weights() const { return weights_; }
  std::span<const double> mean() const { return mean_; }

 private:
  void validate_and_cache();

  std::size_t dim_;
  std::vector<double> particles_;
  std::vector<double> weights_;
  std::vector<double> mean_;
};

// Drift callbacks write into a caller-provided output of length dim so that the
// inner simulation loop does not allocate.
using FastDriftFn = std::function<void(double t, std::span<const double> x,
                                       const EmpiricalMeasure& mu, std::span<double> out)>;
using AveragedDriftFn =
    std::function<void(std::span<const double> x, const EmpiricalMeasure& mu, std::span<double> out)>;
using OmegaFn = std::function<double(double)>;
using EnvelopeFn = std::function<double(std::span<const double> x, const EmpiricalMeasure& mu)>;

/// A drift b(t, x, mu) together with its average bbar(x, mu), the averaging
/// modulus omega and the envelope H such that
///   |(1/T) int_t^{t+T} (b - bbar) ds| <= omega(T) H(x, mu).
struct OscillatingDriftSpec {
  std::string name;
  std::size_t dim = 1;
  FastDriftFn fast_drift;
  AveragedDriftFn averaged_drift;  // empty: compute numerically
  OmegaFn omega;
  EnvelopeFn envelope;
  double p0 = std::numeric_limits<double>::infinity();
  double kappa0 = 0.0;
  /// Shortest oscillation period in the fast variable, when known.
  std::optional<double> shortest_period;
  bool measure_dependent = true;
  /// Truncation radius of a singular kernel (0 when the drift is regular).
  double truncation_delta = 0.0;

  bool has_averaged_drift() const { return static_cast<bool>(averaged_drift); }
  State fast(double t, std::span<const double> x, const EmpiricalMeasure& mu) const;
  State averaged(std::span<const double> x, const EmpiricalMeasure& mu) const;
};

/// Diffusion coefficient sigma(x), a dim x dim matrix written row-major.
using SigmaFn = std::function<void(std::span<const double> x, std::span<double> out)>;

struct DiffusionSpec {
  std::size_t dim = 1;
  SigmaFn sigma;
  double kappa1 = 2.0;
  double beta_holder = 0.5;
  /// Set when sigma(x) == c * I for every x; lets the stepper skip the
  /// matrix-vector product.
  std::optional<double> scalar_multiple;

  std::vector<double> matrix(std::span<const double> x) const;
};

DiffusionSpec scaled_identity_diffusion(std::size_t dim, double scale);

/// sigma(x) = diag(scale * (1 + amplitude * sin(x_i))), amplitude in [0, 1).
DiffusionSpec oscillating_diagonal_diffusion(std::size_t dim, double scale, double amplitude);

// ---------------------------------------------------------------------------
// Operations

/// (1/T_avg) int_{t0}^{t0+T_avg} b(s, x, mu) ds by composite midpoint rule.
State numeric_average(const OscillatingDriftSpec& spec, std::span<const double> x,
                      const EmpiricalMeasure& mu, double t0, double T_avg, std::size_t quad_n);

/// Euclidean norm of (1/T) int_{t0}^{t0+T} (b - bbar) ds.
double kbm_deficiency(const OscillatingDriftSpec& spec, std::span<const double> x,
                      const EmpiricalMeasure& mu, double t0, double T_avg, std::size_t quad_n);

/// Returns a copy of `spec` whose averaged drift is the numeric average over
/// [0, T_avg]. Used when no closed form is available.
OscillatingDriftSpec with_numeric_average(OscillatingDriftSpec spec, double T_avg,
                                          std::size_t quad_n);

/// Scalar field sampled at cell centres of a regular grid:
/// x_i = origin + (i + 1/2) * spacing in every coordinate.
struct GridField {
  std::size_t dim = 1;
  std::vector<double> origin;
  double spacing = 1.0;
  std::vector<std::size_t> counts;
  std::vector<double> values;  // row-major, last coordinate fastest

  static GridField sample(std::size_t dim, double lo, double hi, std::size_t cells_per_dim,
                          const std::function<double(std::span<const double>)>& f);

  std::size_t size() const { return values.size(); }
  State cell_center(std::size_t flat_index) const;
};

/// Smooth cutoff: 1 on |x| <= 1, 0 on |x| >= 2, values in [0, 1].
double cutoff_bump(double radius);

/// Lattice of centres with unit spacing covering the sampled window.
std::vector<State> default_centers(const GridField& field);

/// sup_z || chi((. - z)/r) f ||_p over the supplied centres.
double localized_lp_norm(const GridField& field, double p, double r, const std::vector<State>& centers);
double localized_lp_norm(const GridField& field, double p, double r = 1.0);

// ---------------------------------------------------------------------------
// Hypothesis checks

/// omega nonincreasing on the logarithmic grid and small at its right end.
bool omega_decays(const OmegaFn& omega, double t_min = 1.0, double t_max = 1e8,
                  std::size_t points = 64, double tail_tolerance = 1e-2);

struct EllipticityReport {
  double min_ratio = std::numeric_limits<double>::infinity();
  double max_ratio = 0.0;
  bool ok = true;
};

/// Probes kappa1^{-1}|xi| <= |sigma(x) xi| <= kappa1 |xi| on random x, xi.
EllipticityReport check_ellipticity(const DiffusionSpec& diff, std::size_t probes, std::uint64_t seed,
                                    double radius = 5.0);

}  // namespace avgsde
