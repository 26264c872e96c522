#include <algorithm>
#include <cctype>
#include <charconv>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <set>
#include <sstream>

#include <fmt/format.h>

#include "avgsde/error.hpp"
#include "avgsde/harness.hpp"

namespace avgsde {

std::string to_string(ExperimentKind kind) {
  switch (kind) {
    case ExperimentKind::strong_study:
      return "strong_study";
    case ExperimentKind::weak_study:
      return "weak_study";
    case ExperimentKind::kbm_check:
      return "kbm_check";
    case ExperimentKind::fluct_check:
      return "fluct_check";
    case ExperimentKind::rates_table:
      return "rates_table";
    case ExperimentKind::simulate:
      return "simulate";
  }
  return "unknown";
}

std::string ExperimentSpec::echo() const {
  std::string out;
  for (const auto& [k, v] : entries) out += k + " = " + v + "\n";
  return out;
}

namespace {

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return std::string(s.substr(first, last - first + 1));
}

double parse_number(const std::string& key, const std::string& value) {
  if (value == "inf" || value == "infinity") return std::numeric_limits<double>::infinity();
  double out = 0.0;
  const auto* end = value.data() + value.size();
  const auto [ptr, ec] = std::from_chars(value.data(), end, out);
  if (ec != std::errc() || ptr != end)
    throw ConfigurationError(fmt::format("config key '{}': '{}' is not a number", key, value));
  return out;
}

std::uint64_t parse_unsigned(const std::string& key, const std::string& value) {
  std::uint64_t out = 0;
  const auto* end = value.data() + value.size();
  const auto [ptr, ec] = std::from_chars(value.data(), end, out);
  if (ec != std::errc() || ptr != end)
    throw ConfigurationError(fmt::format("config key '{}': '{}' is not a nonnegative integer", key, value));
  return out;
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1" || value == "yes") return true;
  if (value == "false" || value == "0" || value == "no") return false;
  throw ConfigurationError(fmt::format("config key '{}': '{}' is not a boolean", key, value));
}

std::vector<double> parse_list(const std::string& key, const std::string& value) {
  std::vector<double> out;
  std::stringstream ss(value);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (item.empty()) continue;
    out.push_back(parse_number(key, item));
  }
  if (out.empty()) throw ConfigurationError(fmt::format("config key '{}': empty list", key));
  return out;
}

std::string parse_choice(const std::string& key, const std::string& value, std::initializer_list<const char*> allowed) {
  for (const char* a : allowed)
    if (value == a) return value;
  std::string list;
  for (const char* a : allowed) list += std::string(list.empty() ? "" : ", ") + a;
  throw ConfigurationError(fmt::format("config key '{}': '{}' is not one of {{{}}}", key, value, list));
}

using Handler = std::function<void(ExperimentSpec&, const std::string& key, const std::string& value)>;

const std::map<std::string, Handler>& handlers() {
  static const std::map<std::string, Handler> table = [] {
    std::map<std::string, Handler> h;
    // experiment.*
    h["experiment.kind"] = [](ExperimentSpec& s, const std::string& k, const std::string& v) {
      const auto c = parse_choice(k, v, {"strong_study", "weak_study", "kbm_check", "fluct_check", "rates_table",
                                         "simulate"});
      if (c == "strong_study") s.kind = ExperimentKind::strong_study;
      if (c == "weak_study") s.kind = ExperimentKind::weak_study;
      if (c == "kbm_check") s.kind = ExperimentKind::kbm_check;
      if (c == "fluct_check") s.kind = ExperimentKind::fluct_check;
      if (c == "rates_table") s.kind = ExperimentKind::rates_table;
      if (c == "simulate") s.kind = ExperimentKind::simulate;
    };
    h["experiment.output_dir"] = [](ExperimentSpec& s, auto&, const std::string& v) { s.output_dir = v; };
    h["experiment.eps_grid"] = [](ExperimentSpec& s, auto& k, auto& v) { s.eps_grid = parse_list(k, v); };
    h["experiment.checkpoints"] = [](ExperimentSpec& s, auto& k, auto& v) { s.checkpoints = parse_list(k, v); };
    h["experiment.ell"] = [](ExperimentSpec& s, auto& k, auto& v) { s.ell = parse_number(k, v); };
    h["experiment.dt_over_eps"] = [](ExperimentSpec& s, auto& k, auto& v) { s.dt_over_eps = parse_number(k, v); };
    h["experiment.bin_width"] = [](ExperimentSpec& s, auto& k, auto& v) {
      if (v == "auto")
        s.bin_width.reset();
      else
        s.bin_width = parse_number(k, v);
    };
    h["experiment.slope_band"] = [](ExperimentSpec& s, auto& k, auto& v) { s.slope_band = parse_number(k, v); };
    h["experiment.tv_family"] = [](ExperimentSpec& s, auto& k, auto& v) {
      s.tv_family = parse_choice(k, v, {"none", "tanh_grid"});
    };
    h["experiment.h_grid"] = [](ExperimentSpec& s, auto& k, auto& v) { s.h_grid = parse_list(k, v); };
    h["experiment.dt_over_h"] = [](ExperimentSpec& s, auto& k, auto& v) { s.dt_over_h = parse_number(k, v); };
    h["experiment.fluct_function"] = [](ExperimentSpec& s, auto& k, auto& v) {
      s.fluct_function = parse_choice(k, v, {"indicator", "tanh", "constant"});
    };
    h["experiment.fluct_slope_min"] = [](ExperimentSpec& s, auto& k, auto& v) { s.fluct_slope_min = parse_number(k, v); };
    h["experiment.fluct_slope_max"] = [](ExperimentSpec& s, auto& k, auto& v) { s.fluct_slope_max = parse_number(k, v); };
    h["experiment.kbm_samples"] = [](ExperimentSpec& s, auto& k, auto& v) { s.kbm_samples = parse_unsigned(k, v); };
    h["experiment.kbm_T_grid"] = [](ExperimentSpec& s, auto& k, auto& v) { s.kbm_T_grid = parse_list(k, v); };
    h["experiment.kbm_t0_max"] = [](ExperimentSpec& s, auto& k, auto& v) { s.kbm_t0_max = parse_number(k, v); };
    h["experiment.kbm_tolerance"] = [](ExperimentSpec& s, auto& k, auto& v) { s.kbm_tolerance = parse_number(k, v); };
    h["experiment.kbm_particles"] = [](ExperimentSpec& s, auto& k, auto& v) { s.kbm_particles = parse_unsigned(k, v); };
    h["experiment.kbm_randomize_interaction"] = [](ExperimentSpec& s, auto& k, auto& v) {
      s.kbm_randomize_interaction = parse_bool(k, v);
    };
    h["experiment.write_paths"] = [](ExperimentSpec& s, auto& k, auto& v) { s.write_paths = parse_bool(k, v); };
    // drift.*
    h["drift.name"] = [](ExperimentSpec& s, auto& k, auto& v) {
      s.drift_name = parse_choice(
          k, v, {"power_kernel", "oscillatory_interaction", "mean_reversion", "sine_modulated", "constant"});
    };
    h["drift.dim"] = [](ExperimentSpec& s, auto& k, auto& v) { s.dim = parse_unsigned(k, v); };
    h["drift.alpha1"] = [](ExperimentSpec& s, auto& k, auto& v) { s.alpha1 = parse_number(k, v); };
    h["drift.alpha2"] = [](ExperimentSpec& s, auto& k, auto& v) { s.alpha2 = parse_number(k, v); };
    h["drift.truncation_delta"] = [](ExperimentSpec& s, auto& k, auto& v) {
      if (v == "auto")
        s.truncation_delta.reset();
      else
        s.truncation_delta = parse_number(k, v);
    };
    h["drift.nu_locations"] = [](ExperimentSpec& s, auto& k, auto& v) {
      const auto locs = parse_list(k, v);
      s.nu_atoms.resize(locs.size(), FrequencyAtom{0.0, 1.0});
      for (std::size_t i = 0; i < locs.size(); ++i) s.nu_atoms[i].location = locs[i];
    };
    h["drift.nu_masses"] = [](ExperimentSpec& s, auto& k, auto& v) {
      const auto masses = parse_list(k, v);
      s.nu_atoms.resize(masses.size(), FrequencyAtom{1.0, 0.0});
      for (std::size_t i = 0; i < masses.size(); ++i) s.nu_atoms[i].mass = masses[i];
    };
    h["drift.lipschitz"] = [](ExperimentSpec& s, auto& k, auto& v) { s.lipschitz = parse_number(k, v); };
    h["drift.interaction_seed"] = [](ExperimentSpec& s, auto& k, auto& v) { s.interaction_seed = parse_unsigned(k, v); };
    h["drift.constant"] = [](ExperimentSpec& s, auto& k, auto& v) { s.constant_value = parse_list(k, v); };
    // diffusion.*
    h["diffusion.kind"] = [](ExperimentSpec& s, auto& k, auto& v) {
      s.diffusion_kind = parse_choice(k, v, {"scaled_identity", "oscillating_diagonal"});
    };
    h["diffusion.scale"] = [](ExperimentSpec& s, auto& k, auto& v) { s.diffusion_scale = parse_number(k, v); };
    h["diffusion.amplitude"] = [](ExperimentSpec& s, auto& k, auto& v) { s.diffusion_amplitude = parse_number(k, v); };
    // sim.*
    h["sim.T"] = [](ExperimentSpec& s, auto& k, auto& v) { s.sim.horizon = parse_number(k, v); };
    h["sim.dt"] = [](ExperimentSpec& s, auto& k, auto& v) { s.fixed_dt = parse_number(k, v); };
    h["sim.epsilon"] = [](ExperimentSpec& s, auto& k, auto& v) { s.sim.epsilon = parse_number(k, v); };
    h["sim.n_particles"] = [](ExperimentSpec& s, auto& k, auto& v) { s.sim.n_particles = parse_unsigned(k, v); };
    h["sim.n_replicas"] = [](ExperimentSpec& s, auto& k, auto& v) { s.sim.n_replicas = parse_unsigned(k, v); };
    h["sim.seed"] = [](ExperimentSpec& s, auto& k, auto& v) { s.sim.seed = parse_unsigned(k, v); };
    h["sim.initial"] = [](ExperimentSpec& s, auto& k, auto& v) {
      const auto c = parse_choice(k, v, {"point", "gaussian", "uniform"});
      if (c == "point") s.sim.initial.kind = InitialSampler::Kind::point;
      if (c == "gaussian") s.sim.initial.kind = InitialSampler::Kind::gaussian;
      if (c == "uniform") s.sim.initial.kind = InitialSampler::Kind::uniform_box;
    };
    h["sim.initial_mean"] = [](ExperimentSpec& s, auto& k, auto& v) { s.sim.initial.location = parse_list(k, v); };
    h["sim.initial_std"] = [](ExperimentSpec& s, auto& k, auto& v) { s.sim.initial.scale = parse_number(k, v); };
    h["sim.initial_low"] = [](ExperimentSpec& s, auto& k, auto& v) { s.sim.initial.low = parse_number(k, v); };
    h["sim.initial_high"] = [](ExperimentSpec& s, auto& k, auto& v) { s.sim.initial.high = parse_number(k, v); };
    h["sim.proj_mesh"] = [](ExperimentSpec& s, auto& k, auto& v) { s.sim.proj_mesh = parse_number(k, v); };
    h["sim.rescaled"] = [](ExperimentSpec& s, auto& k, auto& v) { s.sim.rescaled = parse_bool(k, v); };
    h["sim.allow_underresolved"] = [](ExperimentSpec& s, auto& k, auto& v) {
      s.sim.allow_underresolved = parse_bool(k, v);
    };
    // rates.*
    h["rates.alpha"] = [](ExperimentSpec& s, auto& k, auto& v) {
      if (v == "log")
        s.rates_alpha.reset();
      else
        s.rates_alpha = parse_number(k, v);
    };
    h["rates.alpha1"] = [](ExperimentSpec& s, auto& k, auto& v) { s.rates_alpha1 = parse_number(k, v); };
    h["rates.alpha2"] = [](ExperimentSpec& s, auto& k, auto& v) { s.rates_alpha2 = parse_number(k, v); };
    h["rates.d"] = [](ExperimentSpec& s, auto& k, auto& v) { s.rates_d = parse_unsigned(k, v); };
    h["rates.p0"] = [](ExperimentSpec& s, auto& k, auto& v) {
      s.rates_p0 = parse_number(k, v);
      s.rates_p0_set = true;
    };
    h["rates.ell"] = [](ExperimentSpec& s, auto& k, auto& v) { s.rates_ell = parse_number(k, v); };
    h["rates.delta"] = [](ExperimentSpec& s, auto& k, auto& v) { s.rates_delta = parse_number(k, v); };
    h["rates.eps"] = [](ExperimentSpec& s, auto& k, auto& v) { s.rates_eps = parse_list(k, v); };
    return h;
  }();
  return table;
}

std::vector<std::string> required_keys(ExperimentKind kind) {
  switch (kind) {
    case ExperimentKind::strong_study:
    case ExperimentKind::weak_study:
      return {"drift.name", "experiment.eps_grid", "sim.T", "sim.n_particles", "sim.n_replicas", "sim.seed"};
    case ExperimentKind::kbm_check:
      return {"drift.name"};
    case ExperimentKind::fluct_check:
      return {"experiment.h_grid", "sim.T", "sim.n_replicas", "sim.seed"};
    case ExperimentKind::simulate:
      return {"drift.name", "sim.T", "sim.dt", "sim.epsilon", "sim.n_particles", "sim.n_replicas", "sim.seed"};
    case ExperimentKind::rates_table:
      return {};
  }
  return {};
}

void validate(const ExperimentSpec& s) {
  for (std::size_t i = 1; i < s.eps_grid.size(); ++i)
    if (!(s.eps_grid[i] < s.eps_grid[i - 1]))
      throw ConfigurationError("experiment.eps_grid must be strictly decreasing");
  for (double e : s.eps_grid)
    if (!(e > 0.0)) throw ConfigurationError("experiment.eps_grid entries must be positive");
  for (double c : s.checkpoints)
    if (!(c >= 0.0 && c <= s.sim.horizon))
      throw ConfigurationError(fmt::format("experiment.checkpoints: {} lies outside [0, T]", c));
  for (double h : s.h_grid)
    if (!(h > 0.0)) throw ConfigurationError("experiment.h_grid entries must be positive");
  if (s.dim == 0) throw ConfigurationError("drift.dim must be positive");
  if (!(s.ell > 0.0 && s.ell < 1.0)) throw ConfigurationError("experiment.ell must lie in (0, 1)");
  if (!(s.dt_over_eps > 0.0)) throw ConfigurationError("experiment.dt_over_eps must be positive");
  if (!(s.dt_over_h > 0.0)) throw ConfigurationError("experiment.dt_over_h must be positive");
  if (!(s.sim.horizon > 0.0)) throw ConfigurationError("sim.T must be positive");
  if (s.drift_name == "constant" && !s.constant_value.empty() && s.constant_value.size() != s.dim)
    throw ConfigurationError("drift.constant must have drift.dim entries");
}

}  // namespace

ExperimentSpec parse_config_text(const std::string& text) {
  ExperimentSpec spec;
  std::set<std::string> seen;
  std::stringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigurationError(fmt::format("config line {}: expected 'section.key = value'", line_no));
    const std::string key = trim(std::string_view(line).substr(0, eq));
    const std::string value = trim(std::string_view(line).substr(eq + 1));
    const auto it = handlers().find(key);
    if (it == handlers().end()) throw ConfigurationError(fmt::format("unknown config key '{}' (line {})", key, line_no));
    if (!seen.insert(key).second) throw ConfigurationError(fmt::format("duplicate config key '{}' (line {})", key, line_no));
    if (value.empty()) throw ConfigurationError(fmt::format("config key '{}' has an empty value", key));
    spec.entries.emplace_back(key, value);
  }
  if (!seen.contains("experiment.kind")) throw ConfigurationError("missing required config key 'experiment.kind'");
  // Apply in file order, kind first so that required keys can be checked.
  for (const auto& [k, v] : spec.entries)
    if (k == "experiment.kind") handlers().at(k)(spec, k, v);
  for (const auto& key : required_keys(spec.kind))
    if (!seen.contains(key)) throw ConfigurationError(fmt::format("missing required config key '{}'", key));
  for (const auto& [k, v] : spec.entries) handlers().at(k)(spec, k, v);
  if (spec.fixed_dt) spec.sim.dt = *spec.fixed_dt;
  validate(spec);
  return spec;
}

ExperimentSpec parse_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigurationError(fmt::format("cannot open config file '{}'", path.string()));
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config_text(buf.str());
}

}  // namespace avgsde
