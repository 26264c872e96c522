#include "avgsde/harness.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

#include <fmt/format.h>

#include "avgsde/error.hpp"
#include "avgsde/metrics.hpp"
#include "avgsde/rates.hpp"
#include "avgsde/rng.hpp"

namespace avgsde {

using nlohmann::ordered_json;

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

SimConfig base_config(const ExperimentSpec& spec, const RunOptions& opts) {
  SimConfig cfg = spec.sim;
  if (opts.seed_override) cfg.seed = *opts.seed_override;
  cfg.threads = std::max<std::size_t>(1, opts.threads);
  return cfg;
}

std::vector<double> checkpoints_of(const ExperimentSpec& spec) {
  if (!spec.checkpoints.empty()) return spec.checkpoints;
  const double T = spec.sim.horizon;
  return {T / 4.0, T / 2.0, 3.0 * T / 4.0, T};
}

ordered_json common_summary(const ExperimentSpec& spec, const SimConfig& cfg) {
  ordered_json j;
  j["version"] = version_string();
  j["kind"] = to_string(spec.kind);
  j["seed"] = cfg.seed;
  j["config"] = spec.echo();
  ordered_json entries = ordered_json::object();
  for (const auto& [k, v] : spec.entries) entries[k] = v;
  j["config_entries"] = entries;
  return j;
}

// Rate parameters implied by a registered drift.
std::optional<RateParams> rate_params_for(const ExperimentSpec& spec, const OscillatingDriftSpec& drift, double ell) {
  RateParams rp;
  rp.d = spec.dim;
  rp.ell = ell;
  rp.p0 = drift.p0;
  if (spec.drift_name == "power_kernel") {
    if (spec.alpha1 == 1.0)
      rp.alpha.reset();
    else
      rp.alpha = std::min(spec.alpha1, 1.0);
  }
  try {
    rp.validate();
  } catch (const ArgumentError&) {
    return std::nullopt;
  }
  return rp;
}

struct SlopeOutcome {
  std::optional<RateFit> fit;
  std::size_t points = 0;
  bool all_zero = false;
};

SlopeOutcome fit_positive(const std::vector<double>& xs, const std::vector<double>& ys) {
  SlopeOutcome out;
  std::vector<std::pair<double, double>> pts;
  bool any_nonzero = false;
  bool any_finite = false;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (!std::isfinite(ys[i])) continue;
    any_finite = true;
    if (ys[i] != 0.0) any_nonzero = true;
    if (ys[i] > 0.0) pts.emplace_back(xs[i], ys[i]);
  }
  out.all_zero = any_finite && !any_nonzero;
  out.points = pts.size();
  if (pts.size() >= 3) out.fit = fit_rate(pts);
  return out;
}

ordered_json fit_json(const SlopeOutcome& s) {
  ordered_json j;
  j["points"] = s.points;
  if (s.fit) {
    j["slope"] = s.fit->slope;
    j["intercept"] = s.fit->intercept;
    j["r_squared"] = s.fit->r_squared;
  } else {
    j["slope"] = nullptr;
  }
  return j;
}

ordered_json simple_gate(const std::string& name, bool ok) {
  ordered_json g;
  g["name"] = name;
  g["passed"] = ok;
  g["status"] = ok ? "pass" : "fail";
  return g;
}

// Lower slope gate: slope >= predicted - band.
ordered_json slope_gate(const SlopeOutcome& s, std::optional<double> predicted, double band, bool& passed) {
  ordered_json g;
  g["name"] = "slope";
  if (s.all_zero) {
    g["passed"] = true;
    g["status"] = "degenerate-pass";
    g["detail"] = "every estimate is exactly zero";
    return g;
  }
  if (!predicted) {
    g["passed"] = true;
    g["status"] = "skipped";
    g["detail"] = "no predicted exponent for these parameters";
    return g;
  }
  const double threshold = *predicted - band;
  g["predicted"] = *predicted;
  g["band"] = band;
  g["threshold"] = threshold;
  if (!s.fit) {
    g["passed"] = false;
    g["status"] = "fail";
    g["detail"] = fmt::format("only {} positive estimates; at least 3 are needed", s.points);
    passed = false;
    return g;
  }
  const bool ok = s.fit->slope >= threshold;
  g["slope"] = s.fit->slope;
  g["passed"] = ok;
  g["status"] = ok ? "pass" : "fail";
  if (!ok) passed = false;
  return g;
}

bool non_monotone(const std::vector<double>& v) {
  for (std::size_t i = 1; i < v.size(); ++i)
    if (std::isfinite(v[i]) && std::isfinite(v[i - 1]) && v[i] > v[i - 1]) return true;
  return false;
}

double dt_for(const ExperimentSpec& spec, double eps) { return spec.fixed_dt ? *spec.fixed_dt : eps / spec.dt_over_eps; }

std::string fmt_d(double v) { return format_double(v); }

// Pooled samples at recorded index k, ordered [replica][particle][dim].
void pooled(const CoupledEnsemble& ens, std::size_t k, std::vector<double>& a, std::vector<double>& b) {
  a.clear();
  b.clear();
  a.reserve(ens.n_replicas * ens.n_particles * ens.dim);
  b.reserve(a.capacity());
  for (std::size_t r = 0; r < ens.n_replicas; ++r)
    for (std::size_t p = 0; p < ens.n_particles; ++p) {
      const auto xe = ens.eps_state(r, p, k);
      const auto xa = ens.avg_state(r, p, k);
      a.insert(a.end(), xe.begin(), xe.end());
      b.insert(b.end(), xa.begin(), xa.end());
    }
}

}  // namespace

OscillatingDriftSpec build_drift(const ExperimentSpec& spec) {
  const std::size_t d = spec.dim;
  if (spec.drift_name == "power_kernel") {
    PowerKernelParams p;
    p.alpha1 = spec.alpha1;
    p.alpha2 = spec.alpha2;
    p.truncation_delta = spec.truncation_delta.value_or(default_truncation_delta(spec.sim.n_particles, d));
    return power_kernel_drift(p, d);
  }
  if (spec.drift_name == "oscillatory_interaction") {
    OscillatoryInteractionParams p;
    p.F = random_lipschitz_interaction(d, d, spec.lipschitz, spec.interaction_seed);
    p.phi = tanh_difference_feature();
    p.feature_dim = d;
    p.nu_atoms = spec.nu_atoms;
    p.lipschitz = spec.lipschitz;
    return oscillatory_interaction_drift(p, d);
  }
  if (spec.drift_name == "mean_reversion" || spec.drift_name == "sine_modulated")
    return smooth_baseline_drift(spec.drift_name, d);
  if (spec.drift_name == "constant") return constant_drift(spec.constant_value.empty() ? State(d, 0.0) : spec.constant_value);
  if (spec.drift_name.empty()) throw ConfigurationError("missing required config key 'drift.name'");
  throw ConfigurationError(fmt::format("unknown drift '{}'", spec.drift_name));
}

DiffusionSpec build_diffusion(const ExperimentSpec& spec) {
  if (spec.diffusion_kind == "scaled_identity") return scaled_identity_diffusion(spec.dim, spec.diffusion_scale);
  if (spec.diffusion_kind == "oscillating_diagonal")
    return oscillating_diagonal_diffusion(spec.dim, spec.diffusion_scale, spec.diffusion_amplitude);
  throw ConfigurationError(fmt::format("unknown diffusion kind '{}'", spec.diffusion_kind));
}

Report run_strong_study(const ExperimentSpec& spec, const RunOptions& opts) {
  if (spec.eps_grid.size() < 3) throw ConfigurationError("experiment.eps_grid needs at least 3 values for a strong study");
  const auto drift = build_drift(spec);
  if (!drift.has_averaged_drift()) throw ConfigurationError("strong study needs a drift with an averaged form");
  const auto diff = build_diffusion(spec);
  SimConfig cfg = base_config(spec, opts);
  cfg.record_times = {cfg.horizon};

  Report rep;
  rep.name = "strong_study";
  rep.csv_header = {"eps", "estimate", "std_error", "n_replicas", "n_particles", "dt", "delta_trunc"};
  ordered_json summary = common_summary(spec, cfg);
  summary["drift"] = drift.name;
  summary["delta_trunc"] = drift.truncation_delta;
  summary["n_particles"] = cfg.n_particles;
  summary["n_replicas"] = cfg.n_replicas;
  summary["dt_rule"] = spec.fixed_dt ? fmt_d(*spec.fixed_dt) : fmt::format("eps/{}", fmt_d(spec.dt_over_eps));
  summary["ell"] = spec.ell;
  summary["rescaled"] = cfg.rescaled;

  std::vector<double> estimates;
  ordered_json failures = ordered_json::array();
  bool underresolved = false;
  for (double eps : spec.eps_grid) {
    cfg.epsilon = eps;
    cfg.dt = dt_for(spec, eps);
    double est = kNaN, se = kNaN;
    try {
      const auto ens = simulate_coupled(cfg, drift, diff);
      underresolved = underresolved || ens.underresolved_warning;
      const auto s = strong_error(ens, spec.ell);
      est = s.estimate;
      se = s.std_error;
    } catch (const DivergenceError& e) {
      failures.push_back({{"eps", eps}, {"error", e.what()}});
    } catch (const EvaluationError& e) {
      failures.push_back({{"eps", eps}, {"error", e.what()}});
    }
    estimates.push_back(est);
    rep.csv_rows.push_back({fmt_d(eps), fmt_d(est), fmt_d(se), std::to_string(cfg.n_replicas),
                            std::to_string(cfg.n_particles), fmt_d(cfg.dt), fmt_d(drift.truncation_delta)});
  }

  const auto fit = fit_positive(spec.eps_grid, estimates);
  std::optional<double> predicted;
  if (const auto rp = rate_params_for(spec, drift, spec.ell))
    predicted = strong_rate_exponent(*rp, drift.measure_dependent).value;
  summary["fit"] = fit_json(fit);
  summary["predicted_exponent"] = predicted ? ordered_json(*predicted) : ordered_json(nullptr);
  // Order of the per-path RMS error, exponent / (2 ell).
  summary["per_path_order"] = fit.fit ? ordered_json(fit.fit->slope / (2.0 * spec.ell)) : ordered_json(nullptr);
  summary["predicted_per_path_order"] =
      predicted ? ordered_json(*predicted / (2.0 * spec.ell)) : ordered_json(nullptr);
  summary["non_monotone"] = non_monotone(estimates);
  summary["underresolved_warning"] = underresolved;
  summary["failures"] = failures;
  bool passed = failures.empty();
  ordered_json gates = ordered_json::array();
  gates.push_back(simple_gate("no_failed_eps", failures.empty()));
  gates.push_back(slope_gate(fit, predicted, spec.slope_band, passed));
  summary["gates"] = gates;
  summary["passed"] = passed;
  rep.passed = passed;
  rep.summary = std::move(summary);
  return rep;
}

Report run_weak_study(const ExperimentSpec& spec, const RunOptions& opts) {
  if (spec.eps_grid.size() < 3) throw ConfigurationError("experiment.eps_grid needs at least 3 values for a weak study");
  const bool use_hist = spec.dim <= 3;
  if (!use_hist && spec.tv_family == "none")
    throw UnsupportedDimensionError("weak study in d > 3 needs experiment.tv_family");
  const auto drift = build_drift(spec);
  if (!drift.has_averaged_drift()) throw ConfigurationError("weak study needs a drift with an averaged form");
  const auto diff = build_diffusion(spec);
  SimConfig cfg = base_config(spec, opts);
  const auto checkpoints = checkpoints_of(spec);
  cfg.record_times = checkpoints;

  std::vector<TestFunction> family;
  if (spec.tv_family == "tanh_grid") {
    const std::vector<double> ks{1.0, 2.0, 4.0};
    const std::vector<double> cs{-1.0, -0.5, 0.0, 0.5, 1.0};
    family = tanh_family(ks, cs);
  }

  Report rep;
  rep.name = "weak_study";
  rep.csv_header = {"eps", "checkpoint", "tv_hist", "tv_lb", "bin_width"};
  ordered_json summary = common_summary(spec, cfg);
  summary["drift"] = drift.name;
  summary["delta_trunc"] = drift.truncation_delta;
  summary["n_particles"] = cfg.n_particles;
  summary["n_replicas"] = cfg.n_replicas;
  summary["dt_rule"] = spec.fixed_dt ? fmt_d(*spec.fixed_dt) : fmt::format("eps/{}", fmt_d(spec.dt_over_eps));
  summary["checkpoints"] = checkpoints;

  std::vector<double> tv_max, tv_se;
  ordered_json per_eps = ordered_json::array();
  ordered_json failures = ordered_json::array();
  bool underresolved = false;
  std::vector<double> a, b;
  ordered_json bin_stability = nullptr;
  for (double eps : spec.eps_grid) {
    cfg.epsilon = eps;
    cfg.dt = dt_for(spec, eps);
    double best = kNaN, best_se = kNaN;
    ordered_json info;
    info["eps"] = eps;
    info["dt"] = cfg.dt;
    try {
      const auto ens = simulate_coupled(cfg, drift, diff);
      underresolved = underresolved || ens.underresolved_warning;
      best = -1.0;
      for (double t : checkpoints) {
        const std::size_t k = ens.time_index(t);
        pooled(ens, k, a, b);
        double tv = kNaN, se = kNaN, width = kNaN, lb = kNaN;
        if (use_hist) {
          const auto est = tv_histogram_grouped(a, b, spec.dim, cfg.n_replicas, spec.bin_width);
          tv = est.value;
          se = est.std_error;
          width = est.bin_width;
        }
        if (!family.empty()) lb = tv_lower_bound(a, b, spec.dim, family);
        const double stat = use_hist ? tv : lb;
        if (stat > best) {
          best = stat;
          best_se = se;
        }
        rep.csv_rows.push_back({fmt_d(eps), fmt_d(ens.grid[k]), fmt_d(tv), fmt_d(lb), fmt_d(width)});
      }
      info["tv_max"] = best;
      info["tv_max_std_error"] = best_se;
      // Self-distance of the averaged system on two halves of the replicas.
      if (use_hist && cfg.n_replicas >= 2) {
        const std::size_t k = ens.time_index(checkpoints.back());
        pooled(ens, k, a, b);
        const std::size_t half = (cfg.n_replicas / 2) * cfg.n_particles * spec.dim;
        const std::span<const double> all(b);
        info["split_sample_noise_floor"] =
            tv_histogram(all.subspan(0, half), all.subspan(half, half), spec.dim, spec.bin_width);
      }
      // Estimator stability at the finest eps: halve the bin width twice.
      if (use_hist && eps == spec.eps_grid.back()) {
        pooled(ens, ens.time_index(checkpoints.back()), a, b);
        const auto base_est = tv_histogram_grouped(a, b, spec.dim, cfg.n_replicas, spec.bin_width);
        ordered_json widths = ordered_json::array();
        double worst_change = 0.0, band = 3.0 * base_est.std_error;
        for (double factor : {1.0, 0.5, 0.25}) {
          const auto est = tv_histogram_grouped(a, b, spec.dim, cfg.n_replicas, base_est.bin_width * factor);
          widths.push_back({{"bin_width", est.bin_width}, {"tv", est.value}, {"std_error", est.std_error}});
          worst_change = std::max(worst_change, std::abs(est.value - base_est.value));
          band = std::max(band, 3.0 * est.std_error);
        }
        bin_stability = {{"eps", eps}, {"checkpoint", ens.grid[ens.time_index(checkpoints.back())]},
                         {"estimates", widths}, {"max_change", worst_change}, {"band_3se", band},
                         {"passed", worst_change <= band}};
      }
    } catch (const DivergenceError& e) {
      failures.push_back({{"eps", eps}, {"error", e.what()}});
      rep.csv_rows.push_back({fmt_d(eps), "nan", "nan", "nan", "nan"});
    } catch (const EvaluationError& e) {
      failures.push_back({{"eps", eps}, {"error", e.what()}});
      rep.csv_rows.push_back({fmt_d(eps), "nan", "nan", "nan", "nan"});
    }
    tv_max.push_back(best);
    tv_se.push_back(best_se);
    per_eps.push_back(info);
  }

  const auto fit = fit_positive(spec.eps_grid, tv_max);
  std::optional<double> predicted;
  if (const auto rp = rate_params_for(spec, drift, 0.5)) predicted = weak_rate_exponent(*rp).value;
  summary["per_eps"] = per_eps;
  summary["fit"] = fit_json(fit);
  summary["predicted_exponent"] = predicted ? ordered_json(*predicted) : ordered_json(nullptr);
  summary["non_monotone"] = non_monotone(tv_max);
  summary["bin_stability"] = bin_stability;
  summary["underresolved_warning"] = underresolved;
  summary["failures"] = failures;

  bool passed = failures.empty();
  ordered_json gates = ordered_json::array();
  gates.push_back(simple_gate("no_failed_eps", failures.empty()));
  // Decreasing along the grid up to 3 combined standard errors.
  bool monotone = true;
  ordered_json witnesses = ordered_json::array();
  for (std::size_t i = 1; i < tv_max.size(); ++i) {
    const double se_i = std::isfinite(tv_se[i]) ? tv_se[i] : 0.0;
    const double se_p = std::isfinite(tv_se[i - 1]) ? tv_se[i - 1] : 0.0;
    const double slack = 3.0 * std::hypot(se_i, se_p);
    if (!(tv_max[i] < tv_max[i - 1] + slack) && !(tv_max[i] == 0.0 && tv_max[i - 1] == 0.0)) {
      monotone = false;
      witnesses.push_back({{"eps", spec.eps_grid[i]}, {"tv", tv_max[i]}, {"previous", tv_max[i - 1]}, {"slack", slack}});
    }
  }
  gates.push_back(simple_gate("decreasing_3sigma", monotone));
  gates.back()["witnesses"] = witnesses;
  if (!monotone) passed = false;
  gates.push_back(slope_gate(fit, predicted, spec.slope_band, passed));
  summary["gates"] = gates;
  summary["passed"] = passed;
  rep.passed = passed;
  rep.summary = std::move(summary);
  return rep;
}

Report run_kbm_check(const ExperimentSpec& spec, const RunOptions& opts) {
  const std::size_t d = spec.dim;
  SimConfig cfg = base_config(spec, opts);
  ExperimentSpec drift_spec = spec;
  drift_spec.sim.n_particles = spec.kbm_particles;
  const bool interaction = spec.drift_name == "oscillatory_interaction";
  const auto base = build_drift(drift_spec);
  if (!base.omega || !base.envelope) throw ConfigurationError("kbm check needs a drift with omega and H");
  if (!base.has_averaged_drift()) throw ConfigurationError("kbm check needs a drift with an averaged form");
  const double moment = interaction ? inverse_frequency_moment(spec.nu_atoms) : 0.0;
  const auto phi = tanh_difference_feature();

  Report rep;
  rep.name = "kbm_check";
  rep.csv_header = {"t0", "T", "deficiency", "bound", "ratio"};
  ordered_json summary = common_summary(spec, cfg);
  summary["drift"] = base.name;
  summary["delta_trunc"] = base.truncation_delta;
  summary["n_particles"] = spec.kbm_particles;
  summary["samples"] = spec.kbm_samples;
  summary["T_grid"] = spec.kbm_T_grid;
  summary["tolerance"] = spec.kbm_tolerance;
  summary["randomized_interaction"] = interaction && spec.kbm_randomize_interaction;
  summary["omega_decays"] = omega_decays(base.omega);

  double max_ratio = 0.0, max_sine_ratio = 0.0;
  std::size_t violations = 0, sine_violations = 0;
  ordered_json witness = nullptr;
  for (std::size_t s = 0; s < spec.kbm_samples; ++s) {
    rng::CounterNormal rng(rng::substream_key(cfg.seed, s, 0x6b626d, 0));
    OscillatingDriftSpec drift = base;
    if (interaction && spec.kbm_randomize_interaction) {
      OscillatoryInteractionParams p;
      p.F = random_lipschitz_interaction(d, d, spec.lipschitz, rng::mix64(spec.interaction_seed ^ rng::mix64(s + 1)));
      p.phi = phi;
      p.feature_dim = d;
      p.nu_atoms = spec.nu_atoms;
      p.lipschitz = spec.lipschitz;
      drift = oscillatory_interaction_drift(p, d);
    }
    const double t0 = rng.uniform() * spec.kbm_t0_max;
    State x(d);
    for (auto& v : x) v = 2.0 * rng();
    std::vector<double> pts(spec.kbm_particles * d);
    for (auto& v : pts) v = 2.0 * rng();
    const EmpiricalMeasure mu(d, std::move(pts));
    const double H = drift.envelope(x, mu);

    // |int phi(x, y) mu(dy)| for the sine-averaging constant.
    double phi_norm = 0.0;
    if (interaction) {
      State acc(d, 0.0), tmp(d);
      for (std::size_t i = 0; i < mu.size(); ++i) {
        phi(x, mu.particle(i), tmp);
        for (std::size_t c = 0; c < d; ++c) acc[c] += mu.weight(i) * tmp[c];
      }
      for (double v : acc) phi_norm += v * v;
      phi_norm = std::sqrt(phi_norm);
    }

    for (double T : spec.kbm_T_grid) {
      std::size_t quad_n = 4000;
      if (drift.shortest_period)
        quad_n = std::max<std::size_t>(quad_n, static_cast<std::size_t>(std::ceil(200.0 * T / *drift.shortest_period)));
      const double def = kbm_deficiency(drift, x, mu, t0, T, quad_n);
      const double bound = drift.omega(T) * H;
      const double ratio = bound > 0.0 ? def / bound : (def <= 1e-12 ? 0.0 : std::numeric_limits<double>::infinity());
      max_ratio = std::max(max_ratio, ratio);
      bool violated = def > bound * (1.0 + spec.kbm_tolerance) + 1e-12;
      if (interaction) {
        const double sine_bound = 4.0 * std::numbers::pi * spec.lipschitz * (1.0 + phi_norm) / T * moment;
        const double sine_ratio = sine_bound > 0.0 ? def / sine_bound : (def <= 1e-12 ? 0.0 : std::numeric_limits<double>::infinity());
        max_sine_ratio = std::max(max_sine_ratio, sine_ratio);
        if (def > sine_bound * (1.0 + spec.kbm_tolerance) + 1e-12) {
          ++sine_violations;
          violated = true;
        }
      }
      if (violated) {
        ++violations;
        if (witness.is_null())
          witness = {{"sample", s}, {"t0", t0}, {"T", T}, {"x", x}, {"deficiency", def}, {"bound", bound}};
      }
      rep.csv_rows.push_back({fmt_d(t0), fmt_d(T), fmt_d(def), fmt_d(bound), fmt_d(ratio)});
    }
  }

  summary["max_ratio"] = max_ratio;
  summary["violations"] = violations;
  if (interaction) {
    summary["sine_bound_max_ratio"] = max_sine_ratio;
    summary["sine_bound_violations"] = sine_violations;
  }
  summary["witness"] = witness;
  const bool passed = violations == 0;
  ordered_json gates = ordered_json::array();
  gates.push_back(simple_gate("kbm_bound", passed));
  summary["gates"] = gates;
  summary["passed"] = passed;
  rep.passed = passed;
  rep.summary = std::move(summary);
  return rep;
}

Report run_fluct_check(const ExperimentSpec& spec, const RunOptions& opts) {
  SimConfig cfg = base_config(spec, opts);
  const auto diff = build_diffusion(spec);
  std::vector<double> hs = spec.h_grid;
  std::sort(hs.begin(), hs.end(), std::greater<>());
  // Resolution is checked for the whole sweep before anything runs.
  for (double h : hs) {
    const double dt = spec.fixed_dt ? *spec.fixed_dt : h / spec.dt_over_h;
    if (dt > h / 10.0 * (1.0 + 1e-12))
      throw ResolutionError(fmt::format("fluct check: dt = {} exceeds h/10 = {} for h = {}", dt, h / 10.0, h));
  }
  std::function<double(std::span<const double>)> f;
  if (spec.fluct_function == "indicator")
    f = [](std::span<const double> z) { return z[0] > 0.0 ? 1.0 : 0.0; };
  else if (spec.fluct_function == "tanh")
    f = [](std::span<const double> z) { return std::tanh(z[0]); };
  else
    f = [](std::span<const double>) { return 1.0; };

  Report rep;
  rep.name = "fluct_check";
  rep.csv_header = {"h", "estimate", "std_error"};
  ordered_json summary = common_summary(spec, cfg);
  summary["function"] = spec.fluct_function;
  summary["delta_trunc"] = 0.0;
  summary["n_particles"] = cfg.n_particles;
  summary["n_replicas"] = cfg.n_replicas;
  summary["dt_rule"] = spec.fixed_dt ? fmt_d(*spec.fixed_dt) : fmt::format("h/{}", fmt_d(spec.dt_over_h));

  std::vector<double> est;
  for (double h : hs) {
    cfg.dt = spec.fixed_dt ? *spec.fixed_dt : h / spec.dt_over_h;
    const auto s = fluctuation_functional(diff, f, h, cfg);
    est.push_back(s.estimate);
    rep.csv_rows.push_back({fmt_d(h), fmt_d(s.estimate), fmt_d(s.std_error)});
  }
  const auto fit = fit_positive(hs, est);
  summary["fit"] = fit_json(fit);
  summary["non_monotone"] = non_monotone(est);
  ordered_json gate;
  gate["name"] = "slope_band";
  gate["band"] = {spec.fluct_slope_min, spec.fluct_slope_max};
  bool passed = true;
  if (fit.all_zero) {
    gate["passed"] = true;
    gate["status"] = "degenerate-pass";
  } else if (!fit.fit) {
    passed = false;
    gate["passed"] = false;
    gate["status"] = "fail";
    gate["detail"] = fmt::format("only {} positive estimates; at least 3 are needed", fit.points);
  } else {
    passed = fit.fit->slope >= spec.fluct_slope_min && fit.fit->slope <= spec.fluct_slope_max;
    gate["slope"] = fit.fit->slope;
    gate["passed"] = passed;
    gate["status"] = passed ? "pass" : "fail";
  }
  summary["gates"] = ordered_json::array({gate});
  summary["passed"] = passed;
  rep.passed = passed;
  rep.summary = std::move(summary);
  return rep;
}

Report run_rates_table(const ExperimentSpec& spec, const RunOptions& opts) {
  SimConfig cfg = base_config(spec, opts);
  std::vector<RateRow> rows;
  if (spec.rates_alpha1 && spec.rates_alpha2) {
    rows = power_kernel_rate_rows(*spec.rates_alpha1, *spec.rates_alpha2, spec.rates_d,
                                  spec.rates_p0_set ? std::optional<double>(spec.rates_p0) : std::nullopt,
                                  spec.rates_ell, spec.rates_eps);
  } else {
    RateParams rp;
    rp.alpha = spec.rates_alpha;
    rp.d = spec.rates_d;
    rp.p0 = spec.rates_p0;
    rp.ell = spec.rates_ell;
    rp.delta = spec.rates_delta;
    rows.push_back(rate_row(rp, spec.rates_eps));
  }

  Report rep;
  rep.name = "rates";
  rep.csv_header = {"alpha", "d",         "p0",          "ell",           "delta",       "gamma",
                    "beta_w", "weak",     "strong_mu",   "strong_no_mu",  "numeric",     "flag",
                    "eps",    "h_star_weak", "h_star_strong"};
  ordered_json summary = common_summary(spec, cfg);
  ordered_json jrows = ordered_json::array();
  std::ostringstream text;
  text << fmt::format("{:>8} {:>3} {:>10} {:>5} {:>6} {:>10} {:>10} {:>10} {:>10} {:>10}  {}\n", "alpha", "d", "p0",
                      "ell", "delta", "gamma", "beta_w", "weak", "strong_mu", "strong", "flag");
  for (const auto& r : rows) {
    const std::string alpha = r.params.alpha ? fmt_d(*r.params.alpha) : "log";
    for (std::size_t i = 0; i < r.eps.size(); ++i)
      rep.csv_rows.push_back({alpha, std::to_string(r.params.d), fmt_d(r.params.p0), fmt_d(r.params.ell),
                              fmt_d(r.params.delta), fmt_d(r.gamma), fmt_d(r.beta_w), fmt_d(r.weak.value),
                              fmt_d(r.strong_mu_dependent.value), fmt_d(r.strong_mu_independent.value),
                              r.weak.numeric ? "1" : "0", r.flag, fmt_d(r.eps[i]), fmt_d(r.h_star_weak[i]),
                              fmt_d(r.h_star_strong[i])});
    text << fmt::format("{:>8} {:>3} {:>10.6g} {:>5.3g} {:>6.3g} {:>10.6f} {:>10.6f} {:>10.6f} {:>10.6f} {:>10.6f}  {}\n",
                        alpha, r.params.d, r.params.p0, r.params.ell, r.params.delta, r.gamma, r.beta_w, r.weak.value,
                        r.strong_mu_dependent.value, r.strong_mu_independent.value, r.flag);
    ordered_json jr;
    jr["alpha"] = r.params.alpha ? ordered_json(*r.params.alpha) : ordered_json("log");
    jr["d"] = r.params.d;
    jr["p0"] = std::isfinite(r.params.p0) ? ordered_json(r.params.p0) : ordered_json("inf");
    jr["ell"] = r.params.ell;
    jr["delta"] = r.params.delta;
    jr["weak_exponent"] = r.weak.value;
    jr["strong_exponent_mu_dependent"] = r.strong_mu_dependent.value;
    jr["strong_exponent_mu_independent"] = r.strong_mu_independent.value;
    jr["strong_per_path_order_mu_dependent"] = r.strong_mu_dependent.value / (2.0 * r.params.ell);
    jr["numeric"] = r.weak.numeric;
    jr["flag"] = r.flag;
    jrows.push_back(jr);
  }
  summary["rows"] = jrows;
  summary["passed"] = true;
  rep.summary = std::move(summary);
  rep.attachments.emplace_back("rates.txt", text.str());
  return rep;
}

Report run_simulate(const ExperimentSpec& spec, const RunOptions& opts) {
  const auto drift = build_drift(spec);
  const auto diff = build_diffusion(spec);
  SimConfig cfg = base_config(spec, opts);
  cfg.record_times = spec.checkpoints;
  const auto ens = simulate_coupled(cfg, drift, diff);

  Report rep;
  rep.name = "simulate";
  rep.csv_header = {"time"};
  for (std::size_t c = 0; c < spec.dim; ++c) rep.csv_header.push_back(fmt::format("mean_eps_{}", c + 1));
  for (std::size_t c = 0; c < spec.dim; ++c) rep.csv_header.push_back(fmt::format("mean_avg_{}", c + 1));
  rep.csv_header.push_back("mean_abs_gap");
  const double n = static_cast<double>(ens.n_replicas * ens.n_particles);
  for (std::size_t k = 0; k < ens.times(); ++k) {
    State me(spec.dim, 0.0), ma(spec.dim, 0.0);
    double gap = 0.0;
    for (std::size_t r = 0; r < ens.n_replicas; ++r)
      for (std::size_t p = 0; p < ens.n_particles; ++p) {
        const auto xe = ens.eps_state(r, p, k);
        const auto xa = ens.avg_state(r, p, k);
        double g2 = 0.0;
        for (std::size_t c = 0; c < spec.dim; ++c) {
          me[c] += xe[c];
          ma[c] += xa[c];
          g2 += (xe[c] - xa[c]) * (xe[c] - xa[c]);
        }
        gap += std::sqrt(g2);
      }
    std::vector<std::string> row{fmt_d(ens.grid[k])};
    for (double v : me) row.push_back(fmt_d(v / n));
    for (double v : ma) row.push_back(fmt_d(v / n));
    row.push_back(fmt_d(gap / n));
    rep.csv_rows.push_back(std::move(row));
  }

  ordered_json summary = common_summary(spec, cfg);
  summary["drift"] = drift.name;
  summary["delta_trunc"] = drift.truncation_delta;
  summary["n_particles"] = cfg.n_particles;
  summary["n_replicas"] = cfg.n_replicas;
  summary["dt"] = cfg.dt;
  summary["epsilon"] = cfg.epsilon;
  summary["initial"] = cfg.initial.describe();
  summary["underresolved_warning"] = ens.underresolved_warning;
  const auto se = strong_error(ens, spec.ell);
  summary["strong_error"] = {{"ell", spec.ell}, {"estimate", se.estimate}, {"std_error", se.std_error}};
  summary["passed"] = true;
  rep.summary = std::move(summary);
  if (spec.write_paths) {
    std::ostringstream os;
    write_paths_csv(os, ens);
    rep.attachments.emplace_back("paths.csv", os.str());
  }
  return rep;
}

Report run_experiment(const ExperimentSpec& spec, const RunOptions& opts) {
  switch (spec.kind) {
    case ExperimentKind::strong_study:
      return run_strong_study(spec, opts);
    case ExperimentKind::weak_study:
      return run_weak_study(spec, opts);
    case ExperimentKind::kbm_check:
      return run_kbm_check(spec, opts);
    case ExperimentKind::fluct_check:
      return run_fluct_check(spec, opts);
    case ExperimentKind::rates_table:
      return run_rates_table(spec, opts);
    case ExperimentKind::simulate:
      return run_simulate(spec, opts);
  }
  throw ConfigurationError("unknown experiment kind");
}

}  // namespace avgsde
