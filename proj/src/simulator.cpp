#include "avgsde/simulator.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <mutex>
#include <ostream>
#include <thread>

#include <fmt/format.h>

#include "avgsde/error.hpp"
#include "avgsde/rng.hpp"

namespace avgsde {

namespace {

constexpr std::uint64_t kInitialTag = ~0ULL;
constexpr std::uint64_t kReplicaTag = ~1ULL;

}  // namespace

double project_time(double t, double h) {
  if (!(h > 0.0)) throw ArgumentError(fmt::format("project_time: mesh h = {} must be positive", h));
  if (!(t >= 0.0)) throw ArgumentError(fmt::format("project_time: t = {} must be nonnegative", t));
  if (t < h) return t;
  return std::floor(t / h) * h;
}

// ---------------------------------------------------------------------------
// Initial laws

InitialSampler InitialSampler::point(State x) {
  InitialSampler s;
  s.kind = Kind::point;
  s.location = std::move(x);
  return s;
}

InitialSampler InitialSampler::gaussian(State mean, double stddev) {
  InitialSampler s;
  s.kind = Kind::gaussian;
  s.location = std::move(mean);
  s.scale = stddev;
  return s;
}

InitialSampler InitialSampler::uniform_box(double low, double high) {
  InitialSampler s;
  s.kind = Kind::uniform_box;
  s.low = low;
  s.high = high;
  return s;
}

InitialSampler InitialSampler::explicit_states(std::vector<State> states) {
  InitialSampler s;
  s.kind = Kind::explicit_states;
  s.states = std::move(states);
  return s;
}

std::string InitialSampler::describe() const {
  const auto loc = [this] {
    std::string out = "[";
    for (std::size_t i = 0; i < location.size(); ++i) out += fmt::format("{}{:.17g}", i ? "," : "", location[i]);
    return out + "]";
  };
  switch (kind) {
    case Kind::point:
      return "point" + loc();
    case Kind::gaussian:
      return fmt::format("gaussian(mean={}, std={:.17g})", loc(), scale);
    case Kind::uniform_box:
      return fmt::format("uniform_box({:.17g}, {:.17g})", low, high);
    case Kind::explicit_states:
      return fmt::format("explicit({} states)", states.size());
  }
  return "unknown";
}

namespace {

void draw_initial(const InitialSampler& s, std::size_t dim, std::size_t particle, std::uint64_t key,
                  std::span<double> out) {
  rng::CounterNormal gen(key);
  const auto loc = [&](std::size_t k) { return s.location.empty() ? 0.0 : s.location[k % s.location.size()]; };
  switch (s.kind) {
    case InitialSampler::Kind::point:
      for (std::size_t k = 0; k < dim; ++k) out[k] = loc(k);
      break;
    case InitialSampler::Kind::gaussian:
      for (std::size_t k = 0; k < dim; ++k) out[k] = loc(k) + s.scale * gen();
      break;
    case InitialSampler::Kind::uniform_box:
      for (std::size_t k = 0; k < dim; ++k) out[k] = s.low + (s.high - s.low) * gen.uniform();
      break;
    case InitialSampler::Kind::explicit_states:
      std::copy(s.states[particle].begin(), s.states[particle].end(), out.begin());
      break;
  }
}

}  // namespace

// ---------------------------------------------------------------------------
// Configuration

std::size_t SimConfig::steps() const {
  const double ratio = horizon / dt;
  const double k = std::round(ratio);
  if (std::abs(ratio - k) > 1e-9 * std::max(1.0, ratio))
    throw ArgumentError(fmt::format("horizon T = {:.17g} is not an integer multiple of dt = {:.17g}", horizon, dt));
  return static_cast<std::size_t>(k);
}

void SimConfig::validate(std::size_t dim, bool eps_system) const {
  if (!(horizon > 0.0) || !std::isfinite(horizon)) throw ArgumentError("SimConfig: horizon must be positive");
  if (!(dt > 0.0)) throw ArgumentError("SimConfig: dt must be positive");
  if (dt > horizon * (1.0 + 1e-12)) throw ArgumentError("SimConfig: dt must not exceed the horizon");
  if (!(epsilon > 0.0)) throw ArgumentError("SimConfig: epsilon must be positive");
  if (n_particles == 0) throw ArgumentError("SimConfig: n_particles must be at least 1");
  if (n_replicas == 0) throw ArgumentError("SimConfig: n_replicas must be at least 1");
  if (proj_mesh && !(*proj_mesh > 0.0)) throw ArgumentError("SimConfig: projection mesh must be positive");
  if (eps_system && underresolved() && !allow_underresolved)
    throw ArgumentError(fmt::format(
        "SimConfig: dt = {:.6g} exceeds eps/20 = {:.6g}; the oscillation is not resolved "
        "(set allow_underresolved to override)",
        dt, epsilon / 20.0));
  if (!particle_streams.empty() && particle_streams.size() != n_particles)
    throw ArgumentError("SimConfig: particle_streams needs one label per particle");
  for (double t : record_times)
    if (!(t >= 0.0 && t <= horizon * (1.0 + 1e-12)))
      throw ArgumentError(fmt::format("SimConfig: record time {:.17g} outside [0, T]", t));
  if (initial.kind == InitialSampler::Kind::explicit_states) {
    if (initial.states.size() != n_particles)
      throw ArgumentError("SimConfig: explicit initial states need one state per particle");
    for (const auto& s : initial.states)
      if (s.size() != dim) throw ArgumentError("SimConfig: explicit initial state has wrong dimension");
  }
  if (initial.kind == InitialSampler::Kind::uniform_box && !(initial.high > initial.low))
    throw ArgumentError("SimConfig: uniform box needs high > low");
  if (initial.kind == InitialSampler::Kind::gaussian && !(initial.scale >= 0.0))
    throw ArgumentError("SimConfig: Gaussian standard deviation must be nonnegative");
  (void)steps();
}

namespace {

std::vector<std::size_t> recorded_steps(const SimConfig& cfg, std::size_t K) {
  std::vector<std::size_t> out;
  if (cfg.record_times.empty()) {
    out.resize(K + 1);
    for (std::size_t k = 0; k <= K; ++k) out[k] = k;
    return out;
  }
  out.push_back(0);
  for (double t : cfg.record_times)
    out.push_back(std::min(K, static_cast<std::size_t>(std::llround(t / cfg.dt))));
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

std::uint64_t stream_of(const SimConfig& cfg, std::size_t particle) {
  return cfg.particle_streams.empty() ? particle : cfg.particle_streams[particle];
}

// x += sigma(x) * scale * z, with z drawn from the substream.
void add_noise(const DiffusionSpec& diff, std::span<const double> x_old, std::span<const double> z, double scale,
               std::span<double> x_new, std::span<double> matrix) {
  const std::size_t d = diff.dim;
  if (diff.scalar_multiple) {
    const double c = *diff.scalar_multiple * scale;
    for (std::size_t k = 0; k < d; ++k) x_new[k] += c * z[k];
    return;
  }
  diff.sigma(x_old, matrix);
  for (std::size_t i = 0; i < d; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < d; ++j) s += matrix[i * d + j] * z[j];
    x_new[i] += scale * s;
  }
}

[[noreturn]] void rethrow_with_coordinates(std::size_t r, std::size_t p, std::size_t k) {
  const auto where = fmt::format(" [replica {}, particle {}, step {}]", r, p, k);
  try {
    throw;
  } catch (const SingularEvaluationError& e) {
    throw SingularEvaluationError(e.what() + where);
  } catch (const EvaluationError& e) {
    throw EvaluationError(e.what() + where);
  }
}

void check_finite(std::span<const double> x, std::size_t r, std::size_t p, std::size_t k, const char* system) {
  for (double c : x)
    if (!std::isfinite(c))
      throw DivergenceError(
          fmt::format("non-finite state in {} system [replica {}, particle {}, step {}]", system, r, p, k));
}

}  // namespace

// ---------------------------------------------------------------------------
// Parallel loop

void parallel_for(std::size_t n, std::size_t threads, const std::function<void(std::size_t)>& body) {
  threads = std::max<std::size_t>(1, std::min(threads, n));
  if (threads <= 1) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::mutex mu;
  std::size_t failed_index = n;
  std::exception_ptr failure;
  const auto worker = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= n) return;
      try {
        body(i);
      } catch (...) {
        std::lock_guard lock(mu);
        if (i < failed_index) {
          failed_index = i;
          failure = std::current_exception();
        }
      }
    }
  };
  std::vector<std::jthread> pool;
  pool.reserve(threads);
  for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
  pool.clear();
  if (failure) std::rethrow_exception(failure);
}

// ---------------------------------------------------------------------------
// Coupled system

std::size_t CoupledEnsemble::time_index(double t) const {
  std::size_t best = 0;
  for (std::size_t k = 1; k < grid.size(); ++k)
    if (std::abs(grid[k] - t) < std::abs(grid[best] - t)) best = k;
  return best;
}

CoupledEnsemble simulate_coupled(const SimConfig& cfg, const OscillatingDriftSpec& drift,
                                 const DiffusionSpec& diff) {
  if (!drift.fast_drift) throw ConfigurationError("simulate_coupled: drift has no fast component");
  if (!drift.has_averaged_drift())
    throw ConfigurationError(fmt::format(
        "simulate_coupled: drift '{}' has no averaged drift (use with_numeric_average)", drift.name));
  if (drift.dim != diff.dim) throw ArgumentError("simulate_coupled: drift and diffusion dimensions differ");
  cfg.validate(drift.dim, true);

  const std::size_t d = drift.dim;
  const std::size_t N = cfg.n_particles;
  const std::size_t K = cfg.steps();
  const auto rec = recorded_steps(cfg, K);
  const std::size_t R = rec.size();

  CoupledEnsemble ens;
  ens.n_replicas = cfg.n_replicas;
  ens.n_particles = N;
  ens.dim = d;
  ens.dt = cfg.dt;
  ens.epsilon = cfg.epsilon;
  ens.steps = K;
  ens.rescaled = cfg.rescaled;
  ens.underresolved_warning = cfg.underresolved();
  ens.grid_steps = rec;
  ens.grid.resize(R);
  for (std::size_t i = 0; i < R; ++i) ens.grid[i] = static_cast<double>(rec[i]) * cfg.dt;
  ens.paths_eps.assign(cfg.n_replicas * N * R * d, 0.0);
  ens.paths_avg.assign(cfg.n_replicas * N * R * d, 0.0);
  ens.sup_gap.assign(cfg.n_replicas * N, 0.0);
  ens.replica_streams.resize(cfg.n_replicas);
  for (std::size_t r = 0; r < cfg.n_replicas; ++r)
    ens.replica_streams[r] = rng::substream_key(cfg.seed, r, kReplicaTag, kReplicaTag);

  // Time stepping constants. In rescaled form the slow clock s = t/eps runs
  // with ds = dt/eps and the coefficients carry eps and sqrt(eps).
  const double ds = cfg.rescaled ? cfg.dt / cfg.epsilon : cfg.dt;
  const double drift_scale = cfg.rescaled ? cfg.epsilon * ds : cfg.dt;
  const double noise_scale = cfg.rescaled ? std::sqrt(cfg.epsilon) * std::sqrt(ds) : std::sqrt(cfg.dt);

  const auto run_replica = [&](std::size_t r) {
    std::vector<double> xe(N * d), xa(N * d);
    for (std::size_t p = 0; p < N; ++p) {
      const auto key = rng::substream_key(cfg.seed, r, stream_of(cfg, p), kInitialTag);
      draw_initial(cfg.initial, d, p, key, std::span(xe).subspan(p * d, d));
    }
    xa = xe;
    std::vector<double> be(d), ba(d), z(d), matrix(d * d);
    std::size_t next_record = 0;

    const auto record = [&](std::size_t k) {
      if (next_record < R && rec[next_record] == k) {
        for (std::size_t p = 0; p < N; ++p) {
          const std::size_t off = ((r * N + p) * R + next_record) * d;
          std::copy_n(xe.begin() + p * d, d, ens.paths_eps.begin() + off);
          std::copy_n(xa.begin() + p * d, d, ens.paths_avg.begin() + off);
        }
        ++next_record;
      }
    };
    record(0);

    for (std::size_t k = 0; k < K; ++k) {
      const double fast_time = cfg.rescaled ? static_cast<double>(k) * ds
                                            : static_cast<double>(k) * cfg.dt / cfg.epsilon;
      const EmpiricalMeasure mu_eps(d, xe);
      const EmpiricalMeasure mu_avg(d, xa);
      for (std::size_t p = 0; p < N; ++p) {
        const auto x_e = mu_eps.particle(p);
        const auto x_a = mu_avg.particle(p);
        try {
          drift.fast_drift(fast_time, x_e, mu_eps, be);
          drift.averaged_drift(x_a, mu_avg, ba);
        } catch (const EvaluationError&) {
          rethrow_with_coordinates(r, p, k);
        }
        rng::CounterNormal gen(rng::substream_key(cfg.seed, r, stream_of(cfg, p), k));
        for (auto& c : z) c = gen();

        auto ne = std::span(xe).subspan(p * d, d);
        auto na = std::span(xa).subspan(p * d, d);
        for (std::size_t c = 0; c < d; ++c) {
          ne[c] = x_e[c] + be[c] * drift_scale;
          na[c] = x_a[c] + ba[c] * drift_scale;
        }
        add_noise(diff, x_e, z, noise_scale, ne, matrix);
        add_noise(diff, x_a, z, noise_scale, na, matrix);
        check_finite(ne, r, p, k + 1, "eps");
        check_finite(na, r, p, k + 1, "averaged");

        double g2 = 0.0;
        for (std::size_t c = 0; c < d; ++c) g2 += (ne[c] - na[c]) * (ne[c] - na[c]);
        double& gap = ens.sup_gap[r * N + p];
        gap = std::max(gap, std::sqrt(g2));
      }
      record(k + 1);
    }
  };

  parallel_for(cfg.n_replicas, cfg.threads, run_replica);
  return ens;
}

// ---------------------------------------------------------------------------
// Driftless process

void stream_driftless(const SimConfig& cfg, const DiffusionSpec& diff, const DriftlessVisitor& visit) {
  cfg.validate(diff.dim, false);
  const std::size_t d = diff.dim;
  const std::size_t N = cfg.n_particles;
  const std::size_t K = cfg.steps();
  const double noise_scale = std::sqrt(cfg.dt);

  parallel_for(cfg.n_replicas, cfg.threads, [&](std::size_t r) {
    std::vector<double> z(d), x(d), next(d), matrix(d * d);
    for (std::size_t p = 0; p < N; ++p) {
      draw_initial(cfg.initial, d, p, rng::substream_key(cfg.seed, r, stream_of(cfg, p), kInitialTag), x);
      visit(r, p, 0, x);
      for (std::size_t k = 0; k < K; ++k) {
        rng::CounterNormal gen(rng::substream_key(cfg.seed, r, stream_of(cfg, p), k));
        for (auto& c : z) c = gen();
        next = x;
        add_noise(diff, x, z, noise_scale, next, matrix);
        check_finite(next, r, p, k + 1, "driftless");
        x.swap(next);
        visit(r, p, k + 1, x);
      }
    }
  });
}

PathArray simulate_driftless(const SimConfig& cfg, const DiffusionSpec& diff) {
  cfg.validate(diff.dim, false);
  const std::size_t K = cfg.steps();
  const auto rec = recorded_steps(cfg, K);
  PathArray out;
  out.n_replicas = cfg.n_replicas;
  out.n_particles = cfg.n_particles;
  out.dim = diff.dim;
  out.dt = cfg.dt;
  out.grid_steps = rec;
  out.grid.resize(rec.size());
  for (std::size_t i = 0; i < rec.size(); ++i) out.grid[i] = static_cast<double>(rec[i]) * cfg.dt;
  out.paths.assign(cfg.n_replicas * cfg.n_particles * rec.size() * diff.dim, 0.0);

  // Map step -> slot; -1 when the step is not recorded.
  std::vector<std::ptrdiff_t> slot(K + 1, -1);
  for (std::size_t i = 0; i < rec.size(); ++i) slot[rec[i]] = static_cast<std::ptrdiff_t>(i);
  stream_driftless(cfg, diff, [&](std::size_t r, std::size_t p, std::size_t k, std::span<const double> z) {
    if (slot[k] < 0) return;
    const std::size_t off =
        ((r * out.n_particles + p) * rec.size() + static_cast<std::size_t>(slot[k])) * out.dim;
    std::copy(z.begin(), z.end(), out.paths.begin() + off);
  });
  return out;
}

// ---------------------------------------------------------------------------
// CSV dump

void write_paths_csv(std::ostream& os, const CoupledEnsemble& ens) {
  os << "replica,particle,time,system";
  for (std::size_t c = 0; c < ens.dim; ++c) os << ",x_" << (c + 1);
  os << '\n';
  const auto row = [&](std::size_t r, std::size_t p, std::size_t k, const char* system, std::span<const double> x) {
    os << fmt::format("{},{},{:.17g},{}", r, p, ens.grid[k], system);
    for (double c : x) os << fmt::format(",{:.17g}", c);
    os << '\n';
  };
  for (std::size_t r = 0; r < ens.n_replicas; ++r)
    for (std::size_t p = 0; p < ens.n_particles; ++p)
      for (std::size_t k = 0; k < ens.times(); ++k) {
        row(r, p, k, "eps", ens.eps_state(r, p, k));
        row(r, p, k, "avg", ens.avg_state(r, p, k));
      }
}

}  // namespace avgsde
