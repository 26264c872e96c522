#include <doctest.h>

#include <cmath>
#include <sstream>

#include "avgsde/drift_library.hpp"
#include "avgsde/error.hpp"
#include "avgsde/metrics.hpp"
#include "avgsde/simulator.hpp"

using namespace avgsde;

namespace {

DiffusionSpec zero_diffusion(std::size_t dim) {
  DiffusionSpec d;
  d.dim = dim;
  d.sigma = [](std::span<const double>, std::span<double> out) { std::fill(out.begin(), out.end(), 0.0); };
  d.scalar_multiple = 0.0;
  return d;
}

SimConfig small_config() {
  SimConfig cfg;
  cfg.horizon = 1.0;
  cfg.epsilon = 0.1;
  cfg.dt = 0.005;
  cfg.n_particles = 16;
  cfg.n_replicas = 4;
  cfg.seed = 42;
  cfg.initial = InitialSampler::gaussian({}, 1.0);
  return cfg;
}

// Classical RK4 for x' = f(t, x) on [0, T] with n steps; returns the path at the grid t_k = k T / n.
template <class F>
std::vector<double> rk4(F f, double x0, double T, std::size_t n) {
  std::vector<double> path{x0};
  const double h = T / static_cast<double>(n);
  double x = x0;
  for (std::size_t k = 0; k < n; ++k) {
    const double t = static_cast<double>(k) * h;
    const double k1 = f(t, x);
    const double k2 = f(t + h / 2, x + h / 2 * k1);
    const double k3 = f(t + h / 2, x + h / 2 * k2);
    const double k4 = f(t + h, x + h * k3);
    x += h / 6 * (k1 + 2 * k2 + 2 * k3 + k4);
    path.push_back(x);
  }
  return path;
}

}  // namespace

TEST_CASE("project_time") {
  CHECK(project_time(0.05, 0.1) == doctest::Approx(0.05));
  CHECK(project_time(0.35, 0.1) == doctest::Approx(0.3));
  CHECK(project_time(0.1, 0.1) == doctest::Approx(0.1));
  CHECK(project_time(0.0, 0.1) == 0.0);
  CHECK_THROWS_AS(project_time(0.3, 0.0), ArgumentError);
  CHECK_THROWS_AS(project_time(0.3, -1.0), ArgumentError);
}

TEST_CASE("SimConfig validation") {
  auto cfg = small_config();
  CHECK_NOTHROW(cfg.validate(1, true));
  cfg.dt = 0.01;  // eps/20 = 0.005
  CHECK_THROWS_AS(cfg.validate(1, true), ArgumentError);
  CHECK_NOTHROW(cfg.validate(1, false));
  cfg.allow_underresolved = true;
  CHECK_NOTHROW(cfg.validate(1, true));
  CHECK(cfg.underresolved());
  cfg = small_config();
  cfg.dt = 0.003;  // 1/0.003 is not an integer
  CHECK_THROWS_AS(cfg.validate(1, true), ArgumentError);
  cfg = small_config();
  cfg.dt = 2.0;
  CHECK_THROWS_AS(cfg.validate(1, false), ArgumentError);
  cfg = small_config();
  cfg.n_particles = 0;
  CHECK_THROWS_AS(cfg.validate(1, false), ArgumentError);
  cfg = small_config();
  cfg.record_times = {1.5};
  CHECK_THROWS_AS(cfg.validate(1, false), ArgumentError);
}

TEST_CASE("underresolved override is flagged in the ensemble") {
  auto cfg = small_config();
  cfg.dt = 0.01;
  cfg.allow_underresolved = true;
  const auto ens = simulate_coupled(cfg, smooth_baseline_drift(BaselineKind::mean_reversion, 1),
                                    scaled_identity_diffusion(1, 0.5));
  CHECK(ens.underresolved_warning);
  CHECK_FALSE(simulate_coupled(small_config(), smooth_baseline_drift(BaselineKind::mean_reversion, 1),
                               scaled_identity_diffusion(1, 0.5))
                  .underresolved_warning);
}

TEST_CASE("coupling identity: equal drifts give bit-identical paths") {
  auto cfg = small_config();
  cfg.n_particles = 64;
  const auto ens = simulate_coupled(cfg, constant_drift({0.3, -1.0}), oscillating_diagonal_diffusion(2, 1.0, 0.5));
  CHECK(ens.paths_eps == ens.paths_avg);
  for (double g : ens.sup_gap) CHECK(g == 0.0);
  const auto s = strong_error(ens, 0.5);
  CHECK(s.estimate == 0.0);
  CHECK(s.std_error == 0.0);
}

TEST_CASE("initial slices coincide and the grid is uniform") {
  const auto ens = simulate_coupled(small_config(), smooth_baseline_drift(BaselineKind::mean_reversion, 1),
                                    scaled_identity_diffusion(1, 1.0));
  CHECK(ens.times() == 201);
  for (std::size_t k = 0; k < ens.times(); ++k) CHECK(ens.grid[k] == doctest::Approx(0.005 * k));
  for (std::size_t r = 0; r < ens.n_replicas; ++r)
    for (std::size_t p = 0; p < ens.n_particles; ++p) CHECK(ens.eps_state(r, p, 0)[0] == ens.avg_state(r, p, 0)[0]);
}

TEST_CASE("deterministic scalar case against an RK4 oracle") {
  // Two particles at -1 and 1: the empirical mean stays 0, so
  // x' = -(1 + cos(t/eps)) x and xbar' = -xbar.
  auto cfg = small_config();
  cfg.n_particles = 2;
  cfg.n_replicas = 1;
  cfg.epsilon = 0.1;
  cfg.dt = 0.001;
  cfg.initial = InitialSampler::explicit_states({{-1.0}, {1.0}});
  const auto ens = simulate_coupled(cfg, smooth_baseline_drift(BaselineKind::mean_reversion, 1), zero_diffusion(1));
  const std::size_t fine = 100 * ens.steps;
  const double eps = cfg.epsilon;
  const auto xe = rk4([eps](double t, double x) { return -(1.0 + std::cos(t / eps)) * x; }, 1.0, 1.0, fine);
  const auto xa = rk4([](double, double x) { return -x; }, 1.0, 1.0, fine);
  double oracle_gap = 0.0;
  for (std::size_t k = 0; k <= ens.steps; ++k)
    oracle_gap = std::max(oracle_gap, std::abs(xe[100 * k] - xa[100 * k]));
  CHECK(std::abs(ens.gap(0, 1) - oracle_gap) <= 10.0 * cfg.dt);
  for (std::size_t k = 0; k < ens.times(); k += 50) {
    CHECK(std::abs(ens.eps_state(0, 1, k)[0] - xe[100 * k]) <= 10.0 * cfg.dt);
    CHECK(std::abs(ens.avg_state(0, 1, k)[0] - xa[100 * k]) <= 10.0 * cfg.dt);
  }
  // strong_error of the deterministic pair is the oracle gap to the 2 ell.
  const auto s = strong_error(ens, 0.5);
  CHECK(std::abs(s.estimate - oracle_gap) <= 10.0 * cfg.dt);
}

TEST_CASE("results do not depend on the number of threads") {
  auto cfg = small_config();
  cfg.n_replicas = 7;
  const auto drift = smooth_baseline_drift(BaselineKind::mean_reversion, 2);
  const auto diff = oscillating_diagonal_diffusion(2, 0.7, 0.4);
  cfg.threads = 1;
  const auto a = simulate_coupled(cfg, drift, diff);
  cfg.threads = 3;
  const auto b = simulate_coupled(cfg, drift, diff);
  CHECK(a.paths_eps == b.paths_eps);
  CHECK(a.paths_avg == b.paths_avg);
  CHECK(a.sup_gap == b.sup_gap);
  CHECK(a.replica_streams == b.replica_streams);
  cfg.seed = 43;
  const auto c = simulate_coupled(cfg, drift, diff);
  CHECK(c.paths_eps != a.paths_eps);
}

TEST_CASE("no lookahead: a shorter horizon reproduces the leading steps") {
  auto cfg = small_config();
  const auto drift = smooth_baseline_drift(BaselineKind::mean_reversion, 1);
  const auto diff = scaled_identity_diffusion(1, 1.0);
  const auto full = simulate_coupled(cfg, drift, diff);
  cfg.horizon = 0.5;
  const auto part = simulate_coupled(cfg, drift, diff);
  REQUIRE(part.times() == 101);
  for (std::size_t r = 0; r < cfg.n_replicas; ++r)
    for (std::size_t p = 0; p < cfg.n_particles; ++p)
      for (std::size_t k = 0; k < part.times(); ++k) {
        CHECK(part.eps_state(r, p, k)[0] == full.eps_state(r, p, k)[0]);
        CHECK(part.avg_state(r, p, k)[0] == full.avg_state(r, p, k)[0]);
      }
}

TEST_CASE("exchangeability: permuting particles permutes paths") {
  auto cfg = small_config();
  cfg.n_particles = 5;
  cfg.n_replicas = 2;
  std::vector<State> states{{0.1}, {-0.4}, {1.3}, {0.7}, {-2.0}};
  const std::vector<std::size_t> perm{3, 0, 4, 2, 1};
  cfg.initial = InitialSampler::explicit_states(states);
  const auto drift = smooth_baseline_drift(BaselineKind::mean_reversion, 1);
  const auto diff = oscillating_diagonal_diffusion(1, 1.0, 0.3);
  const auto a = simulate_coupled(cfg, drift, diff);
  std::vector<State> permuted;
  cfg.particle_streams.clear();
  for (auto i : perm) {
    permuted.push_back(states[i]);
    cfg.particle_streams.push_back(i);
  }
  cfg.initial = InitialSampler::explicit_states(permuted);
  const auto b = simulate_coupled(cfg, drift, diff);
  for (std::size_t r = 0; r < cfg.n_replicas; ++r)
    for (std::size_t q = 0; q < perm.size(); ++q)
      for (std::size_t k = 0; k < a.times(); k += 20) {
        CHECK(b.eps_state(r, q, k)[0] == doctest::Approx(a.eps_state(r, perm[q], k)[0]).epsilon(1e-12));
        CHECK(b.avg_state(r, q, k)[0] == doctest::Approx(a.avg_state(r, perm[q], k)[0]).epsilon(1e-12));
      }
}

TEST_CASE("rescaled formulation reproduces the strong error") {
  auto cfg = small_config();
  cfg.epsilon = 1.0 / 16.0;
  cfg.dt = cfg.epsilon / 40.0;
  cfg.n_particles = 200;
  cfg.n_replicas = 8;
  const auto drift = smooth_baseline_drift(BaselineKind::mean_reversion, 1);
  const auto diff = scaled_identity_diffusion(1, 0.5);
  const auto a = strong_error(simulate_coupled(cfg, drift, diff), 0.5);
  cfg.rescaled = true;
  const auto b = strong_error(simulate_coupled(cfg, drift, diff), 0.5);
  CHECK(std::abs(a.estimate - b.estimate) <= 3.0 * std::hypot(a.std_error, b.std_error));
}

TEST_CASE("strong error grows with eps") {
  auto cfg = small_config();
  cfg.n_particles = 100;
  cfg.n_replicas = 4;
  const auto drift = smooth_baseline_drift(BaselineKind::mean_reversion, 1);
  const auto diff = scaled_identity_diffusion(1, 0.5);
  double prev = 0.0;
  for (double eps : {1.0 / 64, 1.0 / 16, 1.0 / 4, 1.0}) {
    cfg.epsilon = eps;
    cfg.dt = 1.0 / 2560.0;
    const auto s = strong_error(simulate_coupled(cfg, drift, diff), 0.5);
    CHECK(s.estimate > prev);
    prev = s.estimate;
  }
}

TEST_CASE("evaluation errors carry coordinates and divergence is detected") {
  auto cfg = small_config();
  cfg.initial = InitialSampler::point({0.0, 0.0});
  const auto singular = power_kernel_drift({0.5, 1.5, 0.0}, 2);
  try {
    simulate_coupled(cfg, singular, scaled_identity_diffusion(2, 1.0));
    FAIL("expected a singular evaluation error");
  } catch (const SingularEvaluationError& e) {
    CHECK(std::string(e.what()).find("[replica 0, particle 0, step 0]") != std::string::npos);
  }
  auto blowup = constant_drift({1.0});
  blowup.fast_drift = [](double, std::span<const double> x, const EmpiricalMeasure&, std::span<double> out) {
    out[0] = 1e300 * (1.0 + std::abs(x[0]));
  };
  cfg = small_config();
  CHECK_THROWS_AS(simulate_coupled(cfg, blowup, scaled_identity_diffusion(1, 1.0)), DivergenceError);
  auto no_avg = blowup;
  no_avg.averaged_drift = nullptr;
  CHECK_THROWS_AS(simulate_coupled(cfg, no_avg, scaled_identity_diffusion(1, 1.0)), ConfigurationError);
}

TEST_CASE("driftless terminal variance scales with sigma^2 T") {
  SimConfig cfg;
  cfg.horizon = 1.0;
  cfg.dt = 0.01;
  cfg.n_particles = 100;
  cfg.n_replicas = 200;
  cfg.seed = 9;
  cfg.initial = InitialSampler::point({0.0});
  cfg.record_times = {1.0};
  for (double scale : {1.0, 2.0}) {
    const auto paths = simulate_driftless(cfg, scaled_identity_diffusion(1, scale));
    const std::size_t n = cfg.n_particles * cfg.n_replicas;
    double s2 = 0.0, s4 = 0.0;
    for (std::size_t r = 0; r < cfg.n_replicas; ++r)
      for (std::size_t p = 0; p < cfg.n_particles; ++p) {
        const double z = paths.state(r, p, 1)[0];
        s2 += z * z;
        s4 += z * z * z * z;
      }
    const double var = s2 / n;
    const double se = std::sqrt((s4 / n - var * var) / n);
    const double expected = scale * scale * cfg.horizon;
    CHECK(std::abs(var - expected) <= 3.0 * se);
  }
  const auto a = simulate_driftless(cfg, scaled_identity_diffusion(1, 1.0));
  const auto b = simulate_driftless(cfg, scaled_identity_diffusion(1, 1.0));
  CHECK(a.paths == b.paths);
}

TEST_CASE("paths CSV layout") {
  auto cfg = small_config();
  cfg.n_particles = 2;
  cfg.n_replicas = 1;
  cfg.record_times = {0.5, 1.0};
  const auto ens = simulate_coupled(cfg, constant_drift({0.0, 1.0}), scaled_identity_diffusion(2, 1.0));
  std::ostringstream os;
  write_paths_csv(os, ens);
  const std::string text = os.str();
  CHECK(text.rfind("replica,particle,time,system,x_1,x_2\n", 0) == 0);
  CHECK(std::count(text.begin(), text.end(), '\n') == 1 + 2 * 3 * 2);
}

TEST_CASE("parallel_for rethrows the smallest failing index") {
  for (std::size_t threads : {1, 4}) {
    try {
      parallel_for(50, threads, [](std::size_t i) {
        if (i % 7 == 3) throw ArgumentError(std::to_string(i));
      });
      FAIL("expected an exception");
    } catch (const ArgumentError& e) {
      CHECK(std::string(e.what()) == "3");
    }
  }
}
