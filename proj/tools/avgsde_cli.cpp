#include <cstdio>
#include <iostream>
#include <map>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "avgsde/error.hpp"
#include "avgsde/harness.hpp"

namespace {

int run(const std::string& command, avgsde::ExperimentKind kind, const std::optional<std::string>& config_path,
        const std::optional<std::uint64_t>& seed, std::size_t threads, const std::optional<std::string>& out,
        const std::string& rates_overrides) {
  avgsde::ExperimentSpec spec;
  if (config_path) {
    spec = avgsde::parse_config(*config_path);
  } else if (kind == avgsde::ExperimentKind::rates_table) {
    spec = avgsde::parse_config_text("experiment.kind = rates_table\n" + rates_overrides);
  } else {
    throw avgsde::ConfigurationError(fmt::format("'{}' needs --config", command));
  }
  if (spec.kind != kind)
    throw avgsde::ConfigurationError(fmt::format("config declares experiment.kind = {}, but the command is '{}'",
                                                 avgsde::to_string(spec.kind), command));
  avgsde::RunOptions opts;
  opts.threads = threads;
  opts.seed_override = seed;
  const auto report = avgsde::run_experiment(spec, opts);
  const std::string dir = out.value_or(spec.output_dir);
  for (const auto& path : avgsde::write_report(report, dir)) fmt::print("wrote {}\n", path.string());
  if (kind == avgsde::ExperimentKind::rates_table)
    for (const auto& [name, text] : report.attachments)
      if (name == "rates.txt") fmt::print("{}", text);
  fmt::print("{}: {}\n", command, report.passed ? "PASS" : "FAIL");
  return report.passed ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Averaging-principle experiments for distribution-dependent SDEs with oscillating drift"};
  app.set_version_flag("--version", avgsde::version_string());
  app.require_subcommand(1);

  std::optional<std::string> config_path;
  std::optional<std::uint64_t> seed;
  std::size_t threads = 1;
  std::optional<std::string> out;
  app.add_option("--config", config_path, "Experiment configuration file (section.key = value)");
  app.add_option("--seed", seed, "Master seed; overrides sim.seed");
  app.add_option("--threads", threads, "Worker threads (results do not depend on it)")->check(CLI::PositiveNumber);
  app.add_option("--out", out, "Output directory; overrides experiment.output_dir");

  const std::map<std::string, avgsde::ExperimentKind> commands{
      {"rates", avgsde::ExperimentKind::rates_table},
      {"simulate", avgsde::ExperimentKind::simulate},
      {"strong-study", avgsde::ExperimentKind::strong_study},
      {"weak-study", avgsde::ExperimentKind::weak_study},
      {"kbm-check", avgsde::ExperimentKind::kbm_check},
      {"fluct-check", avgsde::ExperimentKind::fluct_check},
  };
  std::map<std::string, CLI::App*> subs;
  for (const auto& [name, kind] : commands) subs[name] = app.add_subcommand(name)->fallthrough();
  subs["rates"]->description("Exponent table for the weak and strong rates");
  subs["simulate"]->description("Coupled simulation of the oscillating and averaged systems");
  subs["strong-study"]->description("Strong error sweep over eps with slope gate");
  subs["weak-study"]->description("Total variation sweep over eps with slope gate");
  subs["kbm-check"]->description("Randomized check of the averaging modulus bound");
  subs["fluct-check"]->description("Time-discretization fluctuation sweep over h");

  std::optional<std::string> r_alpha, r_p0;
  std::optional<std::size_t> r_d;
  std::optional<double> r_ell, r_delta;
  subs["rates"]->add_option("--alpha", r_alpha, "Modulus exponent, or 'log'");
  subs["rates"]->add_option("--d", r_d, "Dimension");
  subs["rates"]->add_option("--p0", r_p0, "Integrability exponent (or inf)");
  subs["rates"]->add_option("--ell", r_ell, "Moment parameter in (0, 1]");
  subs["rates"]->add_option("--delta", r_delta, "Regularity loss for the measure-independent case");

  CLI11_PARSE(app, argc, argv);

  std::string overrides;
  if (r_alpha) overrides += "rates.alpha = " + *r_alpha + "\n";
  if (r_d) overrides += fmt::format("rates.d = {}\n", *r_d);
  if (r_p0) overrides += "rates.p0 = " + *r_p0 + "\n";
  if (r_ell) overrides += "rates.ell = " + avgsde::format_double(*r_ell) + "\n";
  if (r_delta) overrides += "rates.delta = " + avgsde::format_double(*r_delta) + "\n";

  try {
    for (const auto& [name, kind] : commands)
      if (subs[name]->parsed()) return run(name, kind, config_path, seed, threads, out, overrides);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 2;
}
