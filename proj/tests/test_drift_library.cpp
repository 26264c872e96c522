#include <doctest.h>

#include <cmath>
#include <numbers>

#include "avgsde/drift_library.hpp"
#include "avgsde/error.hpp"
#include "avgsde/rng.hpp"

using namespace avgsde;

namespace {

OscillatoryInteractionParams scalar_params(InteractionFn F, std::vector<FrequencyAtom> atoms) {
  OscillatoryInteractionParams p;
  p.F = std::move(F);
  p.phi = tanh_difference_feature();
  p.feature_dim = 1;
  p.nu_atoms = std::move(atoms);
  p.lipschitz = 1.0;
  return p;
}

}  // namespace

TEST_CASE("power kernel parameter validation") {
  const auto validate = [](double a1, double a2, double delta, std::size_t d) {
    PowerKernelParams{a1, a2, delta}.validate(d);
  };
  CHECK_NOTHROW(validate(0.5, 1.4, 0.0, 1));
  CHECK_THROWS_AS(validate(0.5, 1.5, 0.0, 1), ArgumentError);  // needs < 1 + d/2
  CHECK_THROWS_AS(validate(0.5, 2.0, 0.0, 3), ArgumentError);  // needs < 2
  CHECK_THROWS_AS(validate(0.5, 1.0, 0.0, 2), ArgumentError);
  CHECK_THROWS_AS(validate(0.0, 1.5, 0.0, 2), ArgumentError);
  CHECK_THROWS_AS(validate(0.5, 1.5, -0.1, 2), ArgumentError);
}

TEST_CASE("power kernel at a unit distance from a Dirac mass") {
  const auto drift = power_kernel_drift({0.5, 1.5, 0.0}, 2);
  const std::vector<double> origin{0.0, 0.0};
  const auto mu = EmpiricalMeasure::dirac(origin);
  const State x{0.6, 0.8};
  const auto b0 = drift.fast(0.0, x, mu);
  CHECK(b0[0] == doctest::Approx(2.0 * 0.6));
  CHECK(b0[1] == doctest::Approx(2.0 * 0.8));
  const double pref = std::pow(4.0, -0.5) + 1.0;
  const auto b3 = drift.fast(3.0, x, mu);
  CHECK(b3[0] == doctest::Approx(pref * 0.6));
  const auto bar = drift.averaged(x, mu);
  CHECK(bar[0] == doctest::Approx(0.6));
  CHECK(bar[1] == doctest::Approx(0.8));
  // H = (1 - alpha1)^{-1} |x - y|^{1 - alpha2} = 2 at unit distance.
  CHECK(drift.envelope(x, mu) == doctest::Approx(2.0));
  CHECK(drift.p0 == doctest::Approx(4.0));
}

TEST_CASE("power kernel moduli") {
  const double e = std::numbers::e;
  CHECK(power_kernel_drift({1.0, 1.5, 0.0}, 2).omega(e) == doctest::Approx(1.0 / e));
  CHECK(power_kernel_drift({0.5, 1.5, 0.0}, 2).omega(16.0) == doctest::Approx(0.25));
  CHECK(power_kernel_drift({1.7, 1.5, 0.0}, 2).omega(16.0) == doctest::Approx(1.0 / 16.0));
  CHECK(omega_decays(power_kernel_drift({1.0, 1.5, 0.0}, 2).omega));
}

TEST_CASE("untruncated kernel refuses coincident points") {
  const auto drift = power_kernel_drift({0.5, 1.5, 0.0}, 2);
  const EmpiricalMeasure mu(2, {0.0, 0.0, 1.0, 1.0});
  const State x{1.0, 1.0};
  CHECK_THROWS_AS(drift.fast(0.0, x, mu), SingularEvaluationError);
  const auto truncated = power_kernel_drift({0.5, 1.5, 0.1}, 2);
  CHECK_NOTHROW(truncated.fast(0.0, x, mu));
}

TEST_CASE("power kernel vanishes on a cloud symmetric about x") {
  const auto drift = power_kernel_drift({0.5, 1.5, 0.0}, 2);
  const State x{0.3, -0.2};
  rng::CounterNormal g(17);
  std::vector<double> pts;
  for (int i = 0; i < 50; ++i) {
    const double u = g(), v = g();
    pts.insert(pts.end(), {x[0] + u, x[1] + v, x[0] - u, x[1] - v});
  }
  const EmpiricalMeasure mu(2, pts);
  const auto b = drift.fast(0.4, x, mu);
  CHECK(std::abs(b[0]) < 1e-14 * 100);
  CHECK(std::abs(b[1]) < 1e-14 * 100);
}

TEST_CASE("truncated kernel converges monotonically as delta shrinks") {
  const EmpiricalMeasure mu(2, {0.0, 0.0, 0.05, 0.0, 1.0, -1.0});
  const State x{0.02, 0.01};
  const auto exact = power_kernel_drift({0.5, 1.5, 0.0}, 2).fast(0.0, x, mu);
  double prev = std::numeric_limits<double>::infinity();
  for (double delta : {0.1, 0.03, 0.01}) {
    const auto b = power_kernel_drift({0.5, 1.5, delta}, 2).fast(0.0, x, mu);
    const double err = std::hypot(b[0] - exact[0], b[1] - exact[1]);
    CHECK(err < prev);
    prev = err;
  }
  // Below the closest distance the truncation is inactive.
  const auto b = power_kernel_drift({0.5, 1.5, 0.001}, 2).fast(0.0, x, mu);
  CHECK(b[0] == exact[0]);
  CHECK(b[1] == exact[1]);
}

TEST_CASE("default truncation radius") {
  CHECK(default_truncation_delta(100, 2) == doctest::Approx(0.01));
  CHECK(default_truncation_delta(1000, 3) == doctest::Approx(0.01));
  CHECK(default_truncation_delta(20, 1) == doctest::Approx(0.005));
}

TEST_CASE("oscillatory interaction averages") {
  const EmpiricalMeasure mu(1, {0.1, -0.3});
  const State x{0.2};
  const auto linear = oscillatory_interaction_drift(
      scalar_params([](double u, std::span<const double>, std::span<double> out) { out[0] = u; }, {{1.0, 1.0}}), 1);
  CHECK(std::abs(linear.averaged(x, mu)[0]) < 1e-14);
  const auto square = oscillatory_interaction_drift(
      scalar_params([](double u, std::span<const double>, std::span<double> out) { out[0] = u * u; }, {{1.0, 1.0}}),
      1);
  CHECK(square.averaged(x, mu)[0] == doctest::Approx(0.5).epsilon(1e-13));
  // A zero-frequency atom contributes F(0, v) with its mass.
  const auto mixed = oscillatory_interaction_drift(
      scalar_params([](double u, std::span<const double>, std::span<double> out) { out[0] = u + 1.0; },
                    {{0.0, 2.0}, {3.0, 1.0}}),
      1);
  CHECK(mixed.averaged(x, mu)[0] == doctest::Approx(3.0).epsilon(1e-13));
  CHECK(mixed.fast(0.0, x, mu)[0] == doctest::Approx(3.0));
}

TEST_CASE("oscillatory interaction modulus and envelope") {
  const std::vector<FrequencyAtom> atoms{{1.0, 1.0}, {-2.0, 1.0}, {0.0, 0.5}};
  CHECK(inverse_frequency_moment(atoms) == doctest::Approx(1.5));
  CHECK(nonzero_mass(atoms) == doctest::Approx(2.0));
  CHECK(zero_mass(atoms) == doctest::Approx(0.5));
  auto p = scalar_params(random_lipschitz_interaction(1, 1, 2.0, 4), atoms);
  p.lipschitz = 2.0;
  const auto drift = oscillatory_interaction_drift(p, 1);
  CHECK(drift.omega(10.0) == doctest::Approx(4.0 * std::numbers::pi * 2.0 * 1.5 / 10.0));
  const EmpiricalMeasure mu(1, {0.0, 1.0});
  const State x{0.5};
  CHECK(drift.envelope(x, mu) == doctest::Approx(1.0 + std::tanh(0.5)));
  CHECK(drift.shortest_period.value() == doctest::Approx(std::numbers::pi));
}

TEST_CASE("random Lipschitz interactions obey the class bounds and the sine-averaging deficiency bound") {
  const std::size_t d = 2;
  rng::CounterNormal g(99);
  for (std::uint64_t seed = 1; seed <= 40; ++seed) {
    OscillatoryInteractionParams p;
    p.F = random_lipschitz_interaction(d, d, 1.5, seed);
    p.phi = tanh_difference_feature();
    p.feature_dim = d;
    p.nu_atoms = {{1.0, 1.0}, {2.0, 1.0}};
    p.lipschitz = 1.5;
    CHECK(check_interaction_lipschitz(p, d, 200, seed));
    const auto drift = oscillatory_interaction_drift(p, d);
    std::vector<double> pts(10 * d);
    for (auto& v : pts) v = g();
    const EmpiricalMeasure mu(d, pts);
    const State x{g(), g()};
    const double def = kbm_deficiency(drift, x, mu, 0.0, 10.0, 4000);
    CHECK(def <= drift.omega(10.0) * drift.envelope(x, mu));
  }
  OscillatoryInteractionParams bad = scalar_params(
      [](double, std::span<const double> v, std::span<double> out) { out[0] = 3.0 * v[0]; }, {{1.0, 1.0}});
  CHECK_FALSE(check_interaction_lipschitz(bad, 1, 200, 1));
}

TEST_CASE("mean reversion baseline") {
  const auto drift = smooth_baseline_drift(BaselineKind::mean_reversion, 1);
  const EmpiricalMeasure mu(1, {1.0, 3.0});
  const State x{0.5};
  CHECK(std::abs(drift.fast(std::numbers::pi, x, mu)[0]) < 1e-15);
  CHECK(drift.fast(0.0, x, mu)[0] == doctest::Approx(2.0 * 1.5));
  CHECK(drift.averaged(x, mu)[0] == doctest::Approx(1.5));
  const auto at_x = EmpiricalMeasure::dirac(x);
  CHECK(drift.fast(0.3, x, at_x)[0] == 0.0);
  CHECK(drift.measure_dependent);
}

TEST_CASE("sine modulated baseline") {
  const auto drift = smooth_baseline_drift("sine_modulated", 1);
  const EmpiricalMeasure mu(1, {0.0});
  const EmpiricalMeasure other(1, {5.0, -2.0});
  const State x{0.8};
  CHECK(drift.fast(1.1, x, mu)[0] == drift.fast(1.1, x, other)[0]);
  CHECK(drift.averaged(x, mu)[0] == 0.0);
  CHECK(std::abs(numeric_average(drift, x, mu, 0.0, 2.0 * std::numbers::pi, 100)[0]) < 1e-14);
  CHECK_FALSE(drift.measure_dependent);
  CHECK_THROWS_AS(smooth_baseline_drift("unknown", 1), ArgumentError);
}

TEST_CASE("constant drift is its own average") {
  const auto drift = constant_drift({1.0, -1.0});
  const EmpiricalMeasure mu(2, {0.0, 0.0});
  const State x{3.0, 4.0};
  CHECK(drift.fast(12.3, x, mu) == drift.averaged(x, mu));
  CHECK(drift.envelope(x, mu) == 0.0);
}
