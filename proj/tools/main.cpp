#include "sketchdav/harness.hpp"

#include <CLI11.hpp>

#include <iostream>
#include <string>
#include <vector>

namespace {

// Exit codes: 0 success, 1 solver failure, 2 configuration error.
constexpr int kExitOk = 0;
constexpr int kExitSolver = 1;
constexpr int kExitConfig = 2;

struct CommonFlags {
  std::string config_path;
  std::string preset_name;
  std::string out;
  std::string seed;
  int workers = 0;
  std::vector<std::string> overrides;
};

sketchdav::ExperimentConfig build_config(const CommonFlags& flags) {
  sketchdav::ExperimentConfig cfg;
  if (!flags.preset_name.empty()) {
    cfg = sketchdav::preset(flags.preset_name);
  }
  if (!flags.config_path.empty()) {
    cfg = sketchdav::load_config(flags.config_path);
  }
  if (flags.config_path.empty() && flags.preset_name.empty()) {
    throw std::invalid_argument("provide a config file or --preset <name>");
  }
  for (const std::string& kv : flags.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) {
      throw std::invalid_argument("override must be key=value: " + kv);
    }
    sketchdav::apply_override(cfg, kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (!flags.seed.empty()) {
    sketchdav::apply_override(cfg, "seed", flags.seed);
  }
  if (!flags.out.empty()) {
    cfg.out_dir = flags.out;
  }
  if (flags.workers > 0) {
    cfg.workers = flags.workers;
  }
  return cfg;
}

void add_common(CLI::App* cmd, CommonFlags& flags, bool config_positional) {
  if (config_positional) {
    cmd->add_option("config", flags.config_path, "JSON experiment config");
  }
  cmd->add_option("--preset", flags.preset_name,
                  "named preset (see `sketchdav presets`)");
  cmd->add_option("--seed", flags.seed, "master seed");
  cmd->add_option("--out", flags.out, "output directory");
  cmd->add_option("--workers", flags.workers, "worker count");
  cmd->add_option("--set", flags.overrides,
                  "config override key=value (repeatable)");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "sketchdav: randomized-sketch preconditioned solvers for "
      "strong-constraint 4D-Var"};
  app.require_subcommand(1);

  CommonFlags run_flags;
  CLI::App* run_cmd = app.add_subcommand("run", "run one experiment");
  add_common(run_cmd, run_flags, true);

  CommonFlags sweep_flags;
  std::vector<std::string> axis_specs;
  CLI::App* sweep_cmd =
      app.add_subcommand("sweep", "run a grid of experiments");
  add_common(sweep_cmd, sweep_flags, true);
  sweep_cmd->add_option("--axis", axis_specs,
                        "sweep axis key=v1,v2,... (repeatable)")
      ->required();

  CLI::App* verify_cmd =
      app.add_subcommand("verify", "run the oracle/property self-checks");
  (void)verify_cmd;

  std::string report_dir;
  CLI::App* report_cmd =
      app.add_subcommand("report", "collate summary tables from a run tree");
  report_cmd->add_option("dir", report_dir, "directory of runs")->required();

  CLI::App* presets_cmd =
      app.add_subcommand("presets", "list the named presets");
  (void)presets_cmd;

  CLI11_PARSE(app, argc, argv);

  try {
    if (run_cmd->parsed()) {
      const auto cfg = build_config(run_flags);
      const auto artifacts = sketchdav::run_experiment(cfg);
      std::cout << "artifacts written to " << artifacts.dir.string() << "\n";
      return artifacts.exit_code == 0 ? kExitOk : kExitSolver;
    }
    if (sweep_cmd->parsed()) {
      const auto cfg = build_config(sweep_flags);
      std::vector<std::pair<std::string, std::vector<std::string>>> axes;
      for (const std::string& spec : axis_specs) {
        const auto eq = spec.find('=');
        if (eq == std::string::npos) {
          throw std::invalid_argument("axis must be key=v1,v2,...: " + spec);
        }
        std::vector<std::string> values;
        std::string rest = spec.substr(eq + 1);
        size_t pos = 0;
        while (pos <= rest.size()) {
          const size_t comma = rest.find(',', pos);
          values.push_back(rest.substr(
              pos, comma == std::string::npos ? std::string::npos
                                              : comma - pos));
          if (comma == std::string::npos) break;
          pos = comma + 1;
        }
        axes.emplace_back(spec.substr(0, eq), std::move(values));
      }
      return sketchdav::run_sweep(cfg, axes) == 0 ? kExitOk : kExitSolver;
    }
    if (verify_cmd->parsed()) {
      return sketchdav::run_verify(std::cout) == 0 ? kExitOk : kExitSolver;
    }
    if (report_cmd->parsed()) {
      return sketchdav::run_report(report_dir, std::cout);
    }
    if (presets_cmd->parsed()) {
      for (const std::string& name : sketchdav::preset_names()) {
        std::cout << name << "\n";
      }
      return kExitOk;
    }
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitSolver;
  }
  return kExitConfig;
}
