#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "avgsde/model.hpp"

namespace avgsde {

/// pi_h(t): t on [0, h), k h on [k h, (k+1) h).
double project_time(double t, double h);

/// Product-form law of the initial state.
struct InitialSampler {
  enum class Kind { point, gaussian, uniform_box, explicit_states };

  Kind kind = Kind::gaussian;
  State location;   // point, or Gaussian mean (empty: origin)
  double scale = 1.0;  // Gaussian standard deviation per coordinate
  double low = -1.0;
  double high = 1.0;
  std::vector<State> states;  // explicit_states: one per particle

  static InitialSampler point(State x);
  static InitialSampler gaussian(State mean, double stddev);
  static InitialSampler uniform_box(double low, double high);
  static InitialSampler explicit_states(std::vector<State> states);

  std::string describe() const;
};

struct SimConfig {
  double horizon = 1.0;  // T
  double dt = 1e-3;
  double epsilon = 1.0;
  std::size_t n_particles = 1;
  std::size_t n_replicas = 1;
  std::uint64_t seed = 0;
  InitialSampler initial;
  std::optional<double> proj_mesh;  // h for pi_h diagnostics
  /// Integrate dX = eps b dt + sqrt(eps) sigma dW on [0, T/eps] and report X_{t/eps}.
  bool rescaled = false;
  /// Lifts the dt <= eps/20 rule; the ensemble then carries a warning flag.
  bool allow_underresolved = false;
  /// Times to record (rounded to the grid). Empty: every grid point. Time 0 is
  /// always recorded.
  std::vector<double> record_times;
  /// Noise substream label of each particle; empty means the particle index.
  std::vector<std::uint64_t> particle_streams;
  std::size_t threads = 1;

  /// Number of Euler steps, T/dt, which must be an integer.
  std::size_t steps() const;
  /// Throws ArgumentError on invalid values. `eps_system` enables the
  /// oscillation resolution rule.
  void validate(std::size_t dim, bool eps_system) const;
  bool underresolved() const { return dt > epsilon / 20.0 * (1.0 + 1e-12); }
};

/// Paths of X^eps and X driven by the same initial states and Brownian increments.
struct CoupledEnsemble {
  std::size_t n_replicas = 0;
  std::size_t n_particles = 0;
  std::size_t dim = 0;
  double dt = 0.0;
  double epsilon = 0.0;
  std::size_t steps = 0;
  bool rescaled = false;
  bool underresolved_warning = false;
  std::vector<double> grid;  // recorded times
  std::vector<std::size_t> grid_steps;
  std::vector<double> paths_eps;  // [replica][particle][time][dim]
  std::vector<double> paths_avg;
  /// max over every Euler step (not only recorded ones) of |X^eps - X|,
  /// indexed [replica][particle].
  std::vector<double> sup_gap;
  std::vector<std::uint64_t> replica_streams;

  std::size_t times() const { return grid.size(); }
  std::span<const double> eps_state(std::size_t r, std::size_t p, std::size_t k) const {
    return {paths_eps.data() + offset(r, p, k), dim};
  }
  std::span<const double> avg_state(std::size_t r, std::size_t p, std::size_t k) const {
    return {paths_avg.data() + offset(r, p, k), dim};
  }
  double gap(std::size_t r, std::size_t p) const { return sup_gap[r * n_particles + p]; }
  /// Index of the recorded time closest to t.
  std::size_t time_index(double t) const;

 private:
  std::size_t offset(std::size_t r, std::size_t p, std::size_t k) const {
    return ((r * n_particles + p) * grid.size() + k) * dim;
  }
};

CoupledEnsemble simulate_coupled(const SimConfig& cfg, const OscillatingDriftSpec& drift,
                                 const DiffusionSpec& diff);

/// Single system with zero drift: Z_t = Z_0 + int sigma(Z_s) dW_s.
struct PathArray {
  std::size_t n_replicas = 0;
  std::size_t n_particles = 0;
  std::size_t dim = 0;
  double dt = 0.0;
  std::vector<double> grid;
  std::vector<std::size_t> grid_steps;
  std::vector<double> paths;  // [replica][particle][time][dim]

  std::span<const double> state(std::size_t r, std::size_t p, std::size_t k) const {
    return {paths.data() + ((r * n_particles + p) * grid.size() + k) * dim, dim};
  }
};

PathArray simulate_driftless(const SimConfig& cfg, const DiffusionSpec& diff);

/// Streams every driftless path through `visit(replica, particle, step, state)`
/// for step = 0..K without storing paths. Calls for one (replica, particle)
/// arrive in step order on one thread; different paths may run concurrently.
using DriftlessVisitor =
    std::function<void(std::size_t replica, std::size_t particle, std::size_t step, std::span<const double> z)>;
void stream_driftless(const SimConfig& cfg, const DiffusionSpec& diff, const DriftlessVisitor& visit);

/// Optional CSV dump: replica,particle,time,system,x_1..x_d.
void write_paths_csv(std::ostream& os, const CoupledEnsemble& ens);

/// Runs body(i) for i in [0, n) on up to `threads` workers. Exceptions are
/// rethrown for the smallest failing index.
void parallel_for(std::size_t n, std::size_t threads, const std::function<void(std::size_t)>& body);

}  // namespace avgsde
