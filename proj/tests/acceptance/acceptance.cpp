#include <chrono>
#include <cmath>
#include <filesystem>
#include <functional>
#include <string>
#include <thread>
#include <vector>

#include <boost/rational.hpp>
#include <fmt/core.h>

#include "avgsde/harness.hpp"
#include "avgsde/metrics.hpp"
#include "avgsde/rates.hpp"
#include "avgsde/rng.hpp"
#include "avgsde/simulator.hpp"

using namespace avgsde;
using Q = boost::rational<long long>;

namespace {

struct Outcome {
  bool passed = false;
  std::string detail;
};

const std::filesystem::path out_dir = "acceptance_out";

const std::string mean_reversion_base = R"(drift.name = mean_reversion
diffusion.scale = 0.5
experiment.eps_grid = 0.25, 0.125, 0.0625, 0.03125, 0.015625, 0.0078125
experiment.dt_over_eps = 40
experiment.ell = 0.5
sim.T = 1
sim.n_particles = 2000
sim.n_replicas = 32
sim.seed = 7
sim.initial = gaussian
)";

double gate_value(const Report& rep, const std::string& name, const std::string& field) {
  for (const auto& g : rep.summary["gates"])
    if (g["name"] == name && g.contains(field)) return g[field].get<double>();
  return std::nan("");
}

bool gate_passed(const Report& rep, const std::string& name) {
  for (const auto& g : rep.summary["gates"])
    if (g["name"] == name) return g["passed"].get<bool>();
  return false;
}

Outcome exponent_identities() {
  std::size_t checks = 0, bad = 0;
  double worst = 0.0;
  const auto record = [&](bool exact, double lib, double display) {
    ++checks;
    const double diff = std::abs(lib - display);
    worst = std::max(worst, diff);
    if (!exact || diff > 1e-12) ++bad;
  };
  for (long long a1 : {1, 2, 3})          // alpha1 = a1 / 4
    for (long long a2 : {11, 12, 13})     // alpha2 = a2 / 10
      for (long long d : {1, 2}) {
        const Q alpha(a1, 4), alpha2(a2, 10);
        const Q p0 = Q(d) / (alpha2 - Q(1));
        const Q weak_display = alpha * (Q(2) - alpha2) / (Q(2) + Q(2) * alpha - alpha2);
        const Q strong_display = (Q(4) * alpha - Q(2) * alpha * alpha2) / (Q(2) + Q(2) * alpha - alpha2);
        const Q weak = weak_exponent_closed_form(alpha, regularity_beta_w(Q(d), p0));
        const Q strong = strong_exponent_closed_form(alpha, regularity_gamma(Q(d), p0), Q(1));
        const auto rows = power_kernel_rate_rows(boost::rational_cast<double>(alpha),
                                                 boost::rational_cast<double>(alpha2), static_cast<std::size_t>(d),
                                                 std::nullopt, 1.0, std::vector<double>{0.1});
        const auto& limit = rows.back();
        record(weak == weak_display, limit.weak.value, boost::rational_cast<double>(weak_display));
        record(strong == strong_display, limit.strong_mu_dependent.value,
               boost::rational_cast<double>(strong_display));
      }
  for (long long d : {1, 2, 3})
    for (long long p0 : {4, 6, 10}) {
      const Q weak_display = Q(1, 3) - Q(2 * d, 9 * p0 - 3 * d);
      const Q strong_display = Q(2, 3) * (Q(1) - Q(2 * d, 3 * p0 - d));
      const Q weak = weak_exponent_closed_form(Q(1), regularity_beta_w(Q(d), Q(p0)));
      const Q strong = strong_exponent_closed_form(Q(1), regularity_gamma(Q(d), Q(p0)), Q(1));
      RateParams rp;
      rp.alpha = 1.0;
      rp.d = static_cast<std::size_t>(d);
      rp.p0 = static_cast<double>(p0);
      rp.ell = 1.0;
      record(weak == weak_display, weak_rate_exponent(rp).value, boost::rational_cast<double>(weak_display));
      record(strong == strong_display, strong_rate_exponent(rp, true).value,
             boost::rational_cast<double>(strong_display));
    }
  return {bad == 0, fmt::format("{} identities, {} mismatches, max float deviation {:.3g}", checks, bad, worst)};
}

Outcome numeric_vs_closed_form() {
  rng::CounterNormal g(rng::substream_key(2024, 0, 0, 0));
  double worst = 0.0, worst_local = 0.0;
  std::size_t bad = 0;
  for (int i = 0; i < 50; ++i) {
    const double alpha = 0.2 + 1.8 * g.uniform();
    const double gamma = 0.1 + 0.9 * g.uniform();
    const double exponent = weak_exponent_closed_form(alpha, gamma);
    const auto omega = power_law_omega(alpha);
    std::vector<double> values;
    for (int k : {6, 10, 14}) {
      const double eps = std::pow(2.0, -k);
      const double v = inf_h_rate(omega, gamma, eps, RateMode::weak).value;
      values.push_back(v);
      const double dev = std::abs(std::log(v) / std::log(eps) - exponent);
      worst = std::max(worst, dev);
      if (dev > 1e-3) ++bad;
    }
    const double local = std::log(values[2] / values[1]) / std::log(std::pow(2.0, -4));
    worst_local = std::max(worst_local, std::abs(local - exponent));
  }
  return {bad == 0, fmt::format("{} of 150 points exceed 1e-3; max |ln v / ln eps - exponent| = {:.4g}; "
                                "max local-slope deviation {:.3g}",
                                bad, worst, worst_local)};
}

Outcome sine_averaging_bound() {
  const auto rep = run_kbm_check(parse_config_text(R"(experiment.kind = kbm_check
drift.name = oscillatory_interaction
drift.dim = 2
drift.nu_locations = 1, 2
drift.nu_masses = 1, 1
experiment.kbm_randomize_interaction = true
experiment.kbm_samples = 100
experiment.kbm_t0_max = 50
sim.seed = 3
)"));
  write_report(rep, out_dir / "criterion3");
  const auto& s = rep.summary;
  const bool ok = s["sine_bound_violations"] == 0 && s["violations"] == 0;
  return {ok, fmt::format("{} sine-averaging bound violations (max ratio {:.3g}), {} omega*H violations (max ratio {:.3g})",
                          s["sine_bound_violations"].get<int>(), s["sine_bound_max_ratio"].get<double>(),
                          s["violations"].get<int>(), s["max_ratio"].get<double>())};
}

Outcome kbm_power_kernel() {
  const auto rep = run_kbm_check(parse_config_text(R"(experiment.kind = kbm_check
drift.name = power_kernel
drift.dim = 2
drift.alpha1 = 0.5
drift.alpha2 = 1.5
experiment.kbm_T_grid = 5, 10, 20, 40
experiment.kbm_particles = 20
experiment.kbm_tolerance = 1e-3
sim.seed = 4
)"));
  write_report(rep, out_dir / "criterion4");
  const auto& s = rep.summary;
  return {s["violations"] == 0 && rep.passed,
          fmt::format("{} violations over {} evaluations, max ratio {:.3g}, delta_trunc {:.4g}",
                      s["violations"].get<int>(), rep.csv_rows.size(), s["max_ratio"].get<double>(),
                      s["delta_trunc"].get<double>())};
}

Outcome fluctuation_scaling() {
  const auto rep = run_fluct_check(parse_config_text(R"(experiment.kind = fluct_check
experiment.h_grid = 0.0625, 0.03125, 0.015625, 0.0078125, 0.00390625, 0.001953125, 0.0009765625
experiment.dt_over_h = 10
experiment.fluct_function = indicator
experiment.fluct_slope_min = 0.8
experiment.fluct_slope_max = 1.2
sim.T = 1
sim.n_replicas = 10000
sim.seed = 5
sim.initial = point
)"),
                                   {std::max(1u, std::thread::hardware_concurrency()), std::nullopt});
  write_report(rep, out_dir / "criterion5");
  return {rep.passed, fmt::format("slope {:.4f}, band [0.8, 1.2]", gate_value(rep, "slope_band", "slope"))};
}

Outcome coupling_identity() {
  SimConfig cfg;
  cfg.horizon = 1.0;
  cfg.dt = 1.0 / 1000.0;
  cfg.epsilon = 0.05;
  cfg.n_particles = 256;
  cfg.n_replicas = 8;
  cfg.seed = 13;
  cfg.initial = InitialSampler::gaussian({0.0}, 1.0);
  const auto diff = scaled_identity_diffusion(1, 0.7);
  std::size_t nonzero = 0;
  std::vector<std::string> names;
  // A constant field and a measure-dependent field whose fast form is its own average.
  const auto constant = constant_drift({0.4});
  auto frozen = smooth_baseline_drift(BaselineKind::mean_reversion, 1);
  frozen.name = "mean_reversion_averaged";
  frozen.fast_drift = [avg = frozen.averaged_drift](double, std::span<const double> x, const EmpiricalMeasure& mu,
                                                     std::span<double> out) { avg(x, mu, out); };
  for (const OscillatingDriftSpec* drift : std::vector<const OscillatingDriftSpec*>{&constant, &frozen}) {
    const auto ens = simulate_coupled(cfg, *drift, diff);
    const auto se = strong_error(ens, 0.5);
    if (se.estimate != 0.0) ++nonzero;
    names.push_back(fmt::format("{}={}", drift->name, format_double(se.estimate)));
  }
  return {nonzero == 0, fmt::format("strong errors: {}, {}", names[0], names[1])};
}

Report strong_report(std::size_t threads) {
  return run_strong_study(parse_config_text("experiment.kind = strong_study\n" + mean_reversion_base), {threads, {}});
}

Outcome strong_gate(const Report& rep) {
  write_report(rep, out_dir / "criterion7");
  const double slope = gate_value(rep, "slope", "slope");
  const double threshold = gate_value(rep, "slope", "threshold");
  return {rep.passed, fmt::format("slope {:.4f}, threshold {:.4f}, predicted {:.4f}", slope, threshold,
                                  rep.summary["predicted_exponent"].get<double>())};
}

Outcome weak_gate() {
  const auto rep = run_weak_study(
      parse_config_text("experiment.kind = weak_study\nexperiment.slope_band = 0.13333333333333333\n" +
                        mean_reversion_base),
      {std::max(1u, std::thread::hardware_concurrency()), std::nullopt});
  write_report(rep, out_dir / "criterion8");
  return {rep.passed, fmt::format("decreasing within 3 sigma: {}, slope {:.4f}, threshold {:.4f}",
                                  gate_passed(rep, "decreasing_3sigma") ? "yes" : "no",
                                  gate_value(rep, "slope", "slope"), gate_value(rep, "slope", "threshold"))};
}

Outcome tv_calibration() {
  const double oracle = std::erf(0.25 / std::sqrt(2.0));  // 2 Phi(0.25) - 1
  const std::size_t n = 1000000;
  std::vector<double> a(n), b(n);
  rng::CounterNormal ga(101), gb(202);
  for (auto& v : a) v = ga();
  for (auto& v : b) v = 0.5 + gb();
  const double tv = tv_histogram(a, b, 1, 0.05);
  return {std::abs(tv - oracle) <= 0.01, fmt::format("tv {:.5f}, oracle {:.5f}", tv, oracle)};
}

}  // namespace

int main() {
  std::filesystem::create_directories(out_dir);
  int failures = 0;
  const auto report = [&](int id, double limit_s, const std::function<Outcome()>& body) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = body();
    } catch (const std::exception& e) {
      o = {false, fmt::format("exception: {}", e.what())};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const bool in_time = secs <= limit_s;
    const bool ok = o.passed && in_time;
    if (!ok) ++failures;
    fmt::print("criterion {:>2}: {}  {} [{:.1f} s, limit {:.0f} s{}]\n", id, ok ? "PASS" : "FAIL", o.detail, secs,
               limit_s, in_time ? "" : ", exceeded");
    std::fflush(stdout);
    return secs;
  };

  report(1, 1.0, exponent_identities);
  report(2, 5.0, numeric_vs_closed_form);
  report(3, 30.0, sine_averaging_bound);
  report(4, 30.0, kbm_power_kernel);
  report(5, 300.0, fluctuation_scaling);
  report(6, 10.0, coupling_identity);
  Report strong_one;
  const double strong_secs = report(7, 600.0, [&] {
    strong_one = strong_report(1);
    return strong_gate(strong_one);
  });
  report(8, 600.0, weak_gate);
  report(9, 2.0 * strong_secs, [&] {
    const auto two = strong_report(2);
    const bool same = !strong_one.csv_rows.empty() && two.csv_text() == strong_one.csv_text();
    return Outcome{same, fmt::format("threads 1 vs 2: CSV {}", same ? "byte-identical" : "differs")};
  });
  report(10, 30.0, tv_calibration);
  fmt::print("{} of 10 criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
