#include "sketchdav/harness.hpp"

#include "sketchdav/rng.hpp"

#include <doctest.h>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <unistd.h>

using namespace sketchdav;
namespace fs = std::filesystem;

namespace {

// Small, fast assimilation config used across the harness tests.
ExperimentConfig tiny_config(const std::string& out) {
  ExperimentConfig cfg = preset("burgers_1_1_small");
  cfg.model.n = 49;
  cfg.model.dt_inner = 4e-4;
  cfg.n_t = 5;
  cfg.forecast_instances = 8;
  cfg.solver.sketch.rank = 8;
  cfg.solver.max_gn_iters = 6;
  cfg.out_dir = out;
  return cfg;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag)
      : path(fs::temp_directory_path() /
             ("sketchdav_test_" + tag + "_" +
              std::to_string(::getpid()))) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

}  // namespace

TEST_CASE("presets are all constructible and valid") {
  for (const std::string& name : preset_names()) {
    const ExperimentConfig cfg = preset(name);
    CHECK(cfg.experiment == name);
    CHECK((cfg.study == "assimilate" || cfg.study == "first_iterate"));
  }
  CHECK_THROWS_AS(preset("nope"), std::invalid_argument);
}

TEST_CASE("config overrides parse and reject unknown keys") {
  ExperimentConfig cfg = preset("burgers_1_1_small");
  apply_override(cfg, "rank", "12");
  apply_override(cfg, "mode", "SketchPrecA");
  apply_override(cfg, "nu", "0.05");
  apply_override(cfg, "noise_scale", "0");
  CHECK(cfg.solver.sketch.rank == 12);
  CHECK(cfg.solver.mode == SolveMode::SketchPrecA);
  CHECK(cfg.model.nu == 0.05);
  CHECK(cfg.noise_scale == 0.0);
  CHECK_THROWS_AS(apply_override(cfg, "bogus", "1"), std::invalid_argument);
}

TEST_CASE("json configs overlay a preset") {
  TempDir tmp("json");
  const fs::path file = tmp.path / "cfg.json";
  {
    std::ofstream out(file);
    out << R"({"preset": "burgers_1_1_small", "n": 79, "rank": 11,
               "seed": 77, "mode": "SketchSolv"})";
  }
  const ExperimentConfig cfg = load_config(file);
  CHECK(cfg.model.n == 79);
  CHECK(cfg.solver.sketch.rank == 11);
  CHECK(cfg.master_seed == 77);
  CHECK(cfg.solver.mode == SolveMode::SketchSolv);
  CHECK_THROWS_AS(load_config(tmp.path / "missing.json"),
                  std::invalid_argument);
}

TEST_CASE("burgers scenario matches the documented defaults") {
  const ExperimentConfig cfg = preset("burgers_1_1");
  const Scenario sc = generate_scenario(cfg);
  CHECK(sc.problem.n_t == 20);
  CHECK(sc.problem.n_obs() == 15);
  CHECK(sc.problem.steps_per_interval == 400);
  // Sensors at x = j/16 land exactly on multiples of 25 for n = 399.
  for (int j = 0; j < 15; ++j) {
    CHECK(sc.problem.obs.indices[j] == 25 * (j + 1) - 1);
  }
  CHECK(sc.problem.state_dim() == 399);
}

TEST_CASE("scenario generation is deterministic in the master seed") {
  ExperimentConfig cfg = tiny_config("unused");
  const Scenario a = generate_scenario(cfg);
  const Scenario b = generate_scenario(cfg);
  CHECK(a.problem.background == b.problem.background);
  CHECK(a.problem.obs.values == b.problem.obs.values);
  cfg.master_seed += 1;
  const Scenario c = generate_scenario(cfg);
  CHECK(a.problem.background != c.problem.background);
}

TEST_CASE("zero noise scale gives exact observations of the truth") {
  ExperimentConfig cfg = tiny_config("unused");
  cfg.noise_scale = 0.0;
  const Scenario sc = generate_scenario(cfg);
  for (int i = 0; i < cfg.n_t; ++i) {
    for (Eigen::Index k = 0; k < sc.problem.n_obs(); ++k) {
      CHECK(sc.problem.obs.values(k, i) ==
            sc.truth_states[i + 1](sc.problem.obs.indices[k]));
    }
  }
}

TEST_CASE("dirichlet grid interpolation is exact on linear-in-x data") {
  const int n_fine = 79;
  Vector fine(n_fine);
  // Tent function: linear between the boundary zeros and the midpoint.
  for (int i = 0; i < n_fine; ++i) {
    const double x = (i + 1.0) / (n_fine + 1);
    fine(i) = x < 0.5 ? x : 1.0 - x;
  }
  const Vector coarse = interp_linear_dirichlet(fine, 39);
  for (int i = 0; i < 39; ++i) {
    const double x = (i + 1.0) / 40.0;
    const double expect = x < 0.5 ? x : 1.0 - x;
    CHECK(coarse(i) == doctest::Approx(expect).epsilon(1e-12));
  }
  CHECK(interp_linear_dirichlet(fine, n_fine) == fine);
}

TEST_CASE("run_experiment writes consistent artifacts") {
  TempDir tmp("run");
  ExperimentConfig cfg = tiny_config((tmp.path / "a").string());
  const RunArtifacts artifacts = run_experiment(cfg);
  CHECK(artifacts.exit_code == 0);
  CHECK(artifacts.solver_ran);
  CHECK(fs::exists(artifacts.dir / "iterations.csv"));
  CHECK(fs::exists(artifacts.dir / "error_trajectory.csv"));
  CHECK(fs::exists(artifacts.dir / "summary.csv"));
  CHECK(fs::exists(artifacts.dir / "observations.csv"));

  // Summary counters must reconcile with the last iteration log.
  REQUIRE(!artifacts.result.iterations.empty());
  const Counters& last = artifacts.result.iterations.back().totals;
  CHECK(artifacts.result.counters.fwd == last.fwd);
  CHECK(artifacts.result.counters.offline_tlm == last.offline_tlm);

  // Converged assimilation beats the pure forecast inside the window.
  CHECK(artifacts.result.converged);
  for (int i = 1; i <= cfg.n_t; ++i) {
    CHECK(artifacts.analysis_error[i] <= artifacts.forecast_error[i]);
  }
}

TEST_CASE("forecast-only runs reproduce the background trajectory error") {
  TempDir tmp("fc");
  ExperimentConfig cfg = tiny_config((tmp.path / "fc").string());
  cfg.forecast_only = true;
  const RunArtifacts artifacts = run_experiment(cfg);
  CHECK(!artifacts.solver_ran);
  CHECK(artifacts.analysis_error == artifacts.forecast_error);
}

TEST_CASE("identical seeds produce byte-identical artifacts") {
  TempDir tmp("det");
  ExperimentConfig cfg1 = tiny_config((tmp.path / "r1").string());
  ExperimentConfig cfg2 = tiny_config((tmp.path / "r2").string());
  run_experiment(cfg1);
  run_experiment(cfg2);
  for (const char* name : {"iterations.csv", "error_trajectory.csv",
                           "observations.csv", "summary.csv"}) {
    CHECK(slurp(tmp.path / "r1" / name) == slurp(tmp.path / "r2" / name));
  }
}

TEST_CASE("a single-point sweep reproduces run_experiment byte for byte") {
  TempDir tmp("sweep1");
  ExperimentConfig direct = tiny_config((tmp.path / "direct").string());
  apply_override(direct, "rank", "9");
  run_experiment(direct);

  ExperimentConfig base = tiny_config((tmp.path / "grid").string());
  const int rc = run_sweep(base, {{"rank", {"9"}}});
  CHECK(rc == 0);
  const fs::path point = tmp.path / "grid" / "point_000_rank=9";
  REQUIRE(fs::exists(point / "summary.csv"));
  CHECK(slurp(point / "summary.csv") ==
        slurp(tmp.path / "direct" / "summary.csv"));
  CHECK(fs::exists(tmp.path / "grid" / "collated.csv"));
}

TEST_CASE("sweeps continue past failing points") {
  TempDir tmp("sweepfail");
  ExperimentConfig base = tiny_config((tmp.path / "grid").string());
  // dt_inner grossly over the stability limit makes the first point blow up.
  const int rc = run_sweep(base, {{"dt_inner", {"0.005", "0.0004"}}});
  CHECK(rc == 1);
  CHECK(fs::exists(tmp.path / "grid" / "point_001_dt_inner=0.0004" /
                   "iterations.csv"));
}

TEST_CASE("report collates summary rows from a run tree") {
  TempDir tmp("report");
  ExperimentConfig cfg = tiny_config((tmp.path / "tree" / "one").string());
  run_experiment(cfg);
  cfg.out_dir = (tmp.path / "tree" / "two").string();
  cfg.solver.sketch.rank = 10;
  run_experiment(cfg);
  std::ostringstream os;
  CHECK(run_report(tmp.path / "tree", os) == 0);
  const std::string text = os.str();
  CHECK(text.find("one") != std::string::npos);
  CHECK(text.find("two") != std::string::npos);
  CHECK(fs::exists(tmp.path / "tree" / "collated.csv"));
}

TEST_CASE("first-iterate study produces ordered diagnostics") {
  ExperimentConfig cfg = tiny_config("unused");
  cfg.study = "first_iterate";
  cfg.fi_ranks = {4, 8};
  cfg.fi_methods = {"RandSVD", "Lanczos"};
  cfg.fi_seeds = 2;
  const Scenario sc = generate_scenario(cfg);
  const FirstIterateResult fi = first_iterate_study(cfg, sc);
  CHECK(fi.kappa_ih > 1.0);
  CHECK(fi.kappa_gn_hessian > 1.0);
  CHECK(fi.pcg_prec_gamma > 0);
  REQUIRE(fi.h_spectrum.size() == 49);
  for (Eigen::Index i = 1; i < fi.h_spectrum.size(); ++i) {
    CHECK(fi.h_spectrum(i) <= fi.h_spectrum(i - 1) + 1e-12);
  }
  // RandSVD 2 seeds x 2 ranks + Lanczos 1 x 2 ranks.
  CHECK(fi.rows.size() == 6);
  for (const FirstIterateRow& row : fi.rows) {
    CHECK(row.kappa_precond >= 1.0 - 1e-10);
    CHECK(row.pcg_iterations >= 1);
    CHECK(row.pcg_iterations <= fi.pcg_prec_gamma);
  }
}

TEST_CASE("bve smoke scenario and assimilation run end to end") {
  TempDir tmp("bve");
  ExperimentConfig cfg = preset("bve_smoke");
  cfg.out_dir = (tmp.path / "bve").string();
  // Point the fixture cache into the temp dir to keep the repo pristine.
  ::setenv("SKETCHDAV_DATA", (tmp.path / "data").c_str(), 1);
  const RunArtifacts artifacts = run_experiment(cfg);
  ::unsetenv("SKETCHDAV_DATA");
  CHECK(artifacts.exit_code == 0);
  REQUIRE(artifacts.solver_ran);
  CHECK(!artifacts.result.iterations.empty());
  // Fixture caching: a second scenario generation reuses the saved truth.
  ::setenv("SKETCHDAV_DATA", (tmp.path / "data").c_str(), 1);
  const Scenario again = generate_scenario(cfg);
  ::unsetenv("SKETCHDAV_DATA");
  CHECK(again.truth0.size() == 32 * 65);
}

TEST_CASE("verify suite passes") {
  std::ostringstream os;
  CHECK(run_verify(os) == 0);
}
