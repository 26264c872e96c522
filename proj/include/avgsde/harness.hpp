#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "avgsde/drift_library.hpp"
#include "avgsde/model.hpp"
#include "avgsde/simulator.hpp"

namespace avgsde {

enum class ExperimentKind { strong_study, weak_study, kbm_check, fluct_check, rates_table, simulate };

std::string to_string(ExperimentKind kind);

/// Parsed experiment configuration. `entries` keeps the raw key/value pairs in
/// file order; everything else is the validated, typed view. The accepted
/// keys are documented in docs/config.md.
struct ExperimentSpec {
  ExperimentKind kind = ExperimentKind::simulate;
  std::vector<std::pair<std::string, std::string>> entries;

  // drift.*
  std::string drift_name;
  std::size_t dim = 1;
  double alpha1 = 0.5;
  double alpha2 = 1.5;
  std::optional<double> truncation_delta;  // empty: N^{-1/d}/10
  std::vector<FrequencyAtom> nu_atoms{{1.0, 1.0}};
  double lipschitz = 1.0;
  std::uint64_t interaction_seed = 1;
  State constant_value;

  // diffusion.*
  std::string diffusion_kind = "scaled_identity";
  double diffusion_scale = 1.0;
  double diffusion_amplitude = 0.25;

  // sim.*
  SimConfig sim;
  std::optional<double> fixed_dt;

  // experiment.*
  std::vector<double> eps_grid;
  std::vector<double> checkpoints;  // empty: T/4, T/2, 3T/4, T
  std::string output_dir = "out";
  double ell = 0.5;
  double dt_over_eps = 40.0;
  std::optional<double> bin_width;  // empty: Freedman-Diaconis
  double slope_band = 0.1;
  std::string tv_family = "none";
  std::vector<double> h_grid;
  double dt_over_h = 10.0;
  std::string fluct_function = "indicator";
  double fluct_slope_min = 0.8;
  double fluct_slope_max = 1.2;
  std::size_t kbm_samples = 100;
  std::vector<double> kbm_T_grid{5.0, 10.0, 20.0};
  double kbm_t0_max = 50.0;
  double kbm_tolerance = 1e-3;
  std::size_t kbm_particles = 20;
  bool kbm_randomize_interaction = false;
  bool write_paths = false;

  // rates.*
  std::optional<double> rates_alpha = 1.0;  // empty: logarithmic modulus
  std::optional<double> rates_alpha1;       // power-kernel rows when both alpha1 and alpha2 are set
  std::optional<double> rates_alpha2;
  std::size_t rates_d = 1;
  double rates_p0 = std::numeric_limits<double>::infinity();
  bool rates_p0_set = false;
  double rates_ell = 0.5;
  double rates_delta = 0.0;
  std::vector<double> rates_eps{0.25, 0.0625, 0.015625};

  /// "key = value" lines in the original order; parsing this text yields the same entries.
  std::string echo() const;
};

ExperimentSpec parse_config_text(const std::string& text);
ExperimentSpec parse_config(const std::filesystem::path& path);

/// Runtime knobs that are not part of the experiment definition.
struct RunOptions {
  std::size_t threads = 1;
  std::optional<std::uint64_t> seed_override;
};

struct Report {
  std::string name;  // file stem
  std::vector<std::string> csv_header;
  std::vector<std::vector<std::string>> csv_rows;
  nlohmann::ordered_json summary;
  bool passed = true;
  /// Extra files (name, contents) written next to the CSV.
  std::vector<std::pair<std::string, std::string>> attachments;

  std::string csv_text() const;
};

/// Builds the drift / diffusion named by the spec (delta_trunc resolved for N).
OscillatingDriftSpec build_drift(const ExperimentSpec& spec);
DiffusionSpec build_diffusion(const ExperimentSpec& spec);

Report run_strong_study(const ExperimentSpec& spec, const RunOptions& opts = {});
Report run_weak_study(const ExperimentSpec& spec, const RunOptions& opts = {});
Report run_kbm_check(const ExperimentSpec& spec, const RunOptions& opts = {});
Report run_fluct_check(const ExperimentSpec& spec, const RunOptions& opts = {});
Report run_rates_table(const ExperimentSpec& spec, const RunOptions& opts = {});
Report run_simulate(const ExperimentSpec& spec, const RunOptions& opts = {});
Report run_experiment(const ExperimentSpec& spec, const RunOptions& opts = {});

/// Writes <name>.csv and <name>_summary.json (plus attachments) into `dir`.
/// Returns the written paths.
std::vector<std::filesystem::path> write_report(const Report& report, const std::filesystem::path& dir);

/// 17 significant digits.
std::string format_double(double v);

/// Version string embedded in reports.
std::string version_string();

}  // namespace avgsde
