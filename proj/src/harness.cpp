#include "sketchdav/harness.hpp"

#include "sketchdav/analysis.hpp"
#include "sketchdav/burgers.hpp"
#include "sketchdav/bve.hpp"
#include "sketchdav/rng.hpp"

#include <nlohmann/json.hpp>

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <iostream>
#include <mutex>
#include <numbers>
#include <sstream>
#include <stdexcept>
#include <thread>

namespace sketchdav {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr std::uint64_t kBackgroundStream = 2;
constexpr std::uint64_t kSpinupStream = 7;
constexpr std::uint64_t kSolverSketchStream = 42;
constexpr std::uint64_t kObsStream = 100;
constexpr std::uint64_t kScanStream = 0x66690000;

constexpr double kSpinupAmplitude = 50.0;

std::string data_dir() {
  if (const char* env = std::getenv("SKETCHDAV_DATA")) {
    return env;
  }
#ifdef SKETCHDAV_DATA_DIR
  return SKETCHDAV_DATA_DIR;
#else
  return "data";
#endif
}

int resolve_steps_per_interval(const ExperimentConfig& cfg) {
  const ModelParams& mp = cfg.model;
  if (mp.dt_inner > 0.0) {
    const int spi = std::max<int>(1, std::llround(cfg.dt / mp.dt_inner));
    return spi;
  }
  double limit;
  if (mp.type == "burgers") {
    const double dx = 1.0 / (mp.n + 1);
    limit = 0.9 * std::min(dx, mp.nu > 0.0 ? dx * dx / (2.0 * mp.nu) : dx);
  } else {
    // Advective limit with the velocity headroom used by the reference runs.
    limit = (1.0 / (mp.nx + 1)) / 40.0;
  }
  return std::max<int>(1, static_cast<int>(std::ceil(cfg.dt / limit)));
}

std::vector<Eigen::Index> burgers_sensor_indices(int n) {
  // 15 sensors at x = j/16, snapped to the nearest interior grid index.
  std::vector<Eigen::Index> idx;
  for (int j = 1; j <= 15; ++j) {
    const long long i = std::llround(j * (n + 1) / 16.0);
    idx.push_back(static_cast<Eigen::Index>(i - 1));
  }
  for (size_t k = 0; k < idx.size(); ++k) {
    if (idx[k] < 0 || idx[k] >= n || (k > 0 && idx[k] <= idx[k - 1])) {
      throw std::invalid_argument(
          "burgers sensor layout requires a finer grid (indices collide)");
    }
  }
  return idx;
}

std::vector<Eigen::Index> bve_sensor_indices(int nx, int ny) {
  // 16 x 16 sensors equally spaced in each dimension, snapped to the grid.
  std::vector<Eigen::Index> idx;
  for (int l = 1; l <= 16; ++l) {
    const long long iy = std::llround(l * (ny + 1) / 17.0);
    for (int k = 1; k <= 16; ++k) {
      const long long ix = std::llround(k * (nx + 1) / 17.0);
      idx.push_back(static_cast<Eigen::Index>((ix - 1) +
                                              static_cast<long long>(nx) *
                                                  (iy - 1)));
    }
  }
  for (size_t k = 1; k < idx.size(); ++k) {
    if (idx[k] <= idx[k - 1]) {
      throw std::invalid_argument(
          "bve sensor layout requires a finer grid (indices collide)");
    }
  }
  return idx;
}

Vector burgers_truth(int n) {
  Vector x(n);
  for (int i = 0; i < n; ++i) {
    x(i) = std::sin(std::numbers::pi * (i + 1) / (n + 1));
  }
  return x;
}

std::mutex& fixture_mutex() {
  static std::mutex m;
  return m;
}

Vector bve_truth_fixture(const BVEModel& model, int spinup_steps,
                         std::uint64_t seed) {
  std::lock_guard<std::mutex> lock(fixture_mutex());
  const std::string tag =
      "nx=" + std::to_string(model.nx()) + " ny=" + std::to_string(model.ny()) +
      " re=" + format_csv_double(model.reynolds()) +
      " ro=" + format_csv_double(model.rossby()) +
      " dt=" + format_csv_double(model.inner_dt()) +
      " steps=" + std::to_string(spinup_steps) + " seed=" +
      std::to_string(seed);
  const fs::path path =
      fs::path(data_dir()) / "fixtures" /
      ("bve_truth_" + std::to_string(model.nx()) + "x" +
       std::to_string(model.ny()) + "_s" + std::to_string(spinup_steps) +
       "_seed" + std::to_string(seed) + "_v1.csv");

  if (fs::exists(path)) {
    std::ifstream in(path);
    std::string line;
    std::getline(in, line);
    if (line == "# sketchdav bve truth v1 " + tag) {
      Vector truth(model.dim());
      Eigen::Index i = 0;
      while (std::getline(in, line) && i < truth.size()) {
        truth(i++) = std::strtod(line.c_str(), nullptr);
      }
      if (i == truth.size()) {
        return truth;
      }
    }
    std::cerr << "[sketchdav] warning: stale bve fixture " << path
              << ", regenerating\n";
  }

  // Spin a smooth seeded random field up to a developed gyre state.
  PriorCovariance smooth =
      PriorCovariance::make_2d(model.nx(), model.ny(), 0.0, 0.06);
  Vector field = smooth.apply_sqrt(gaussian_vector(model.dim(), seed));
  field *= kSpinupAmplitude / std::max(1e-12, field.cwiseAbs().maxCoeff());
  field = model.forward(field, spinup_steps);

  std::error_code ec;
  fs::create_directories(path.parent_path(), ec);
  if (!ec) {
    std::ofstream out(path);
    out << "# sketchdav bve truth v1 " << tag << "\n";
    for (Eigen::Index i = 0; i < field.size(); ++i) {
      out << format_csv_double(field(i)) << "\n";
    }
  }
  return field;
}

void write_lines(const fs::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw std::runtime_error("cannot write " + path.string());
  }
  out << content;
}

std::string bool_str(bool b) { return b ? "true" : "false"; }

}  // namespace

std::string format_csv_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

Vector interp_linear_dirichlet(const Vector& fine, int n_coarse) {
  const int n_fine = static_cast<int>(fine.size());
  if (n_coarse == n_fine) {
    return fine;
  }
  Vector out(n_coarse);
  for (int j = 1; j <= n_coarse; ++j) {
    const double x = static_cast<double>(j) / (n_coarse + 1);
    const double pos = x * (n_fine + 1);  // fine grid coordinate
    const int i0 = std::min(n_fine, std::max(0, static_cast<int>(pos)));
    const double w = pos - i0;
    const double left = i0 >= 1 ? fine(i0 - 1) : 0.0;          // value at i0
    const double right = i0 < n_fine ? fine(i0) : 0.0;         // at i0 + 1
    out(j - 1) = (1.0 - w) * left + w * right;
  }
  return out;
}

Matrix materialize_by_rows(const LinearMap& a) {
  Matrix out(a.rows(), a.cols());
  Vector e = Vector::Zero(a.rows());
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    e(i) = 1.0;
    out.row(i) = a.adjoint_apply(e).transpose();
    e(i) = 0.0;
  }
  return out;
}

std::vector<std::string> preset_names() {
  return {"burgers_1_1", "burgers_1_1_small", "burgers_1_2", "burgers_1_3",
          "bve_2",       "bve_2_full",        "bve_smoke"};
}

ExperimentConfig preset(const std::string& name) {
  ExperimentConfig cfg;
  cfg.experiment = name;
  if (name == "burgers_1_1" || name == "burgers_1_2") {
    cfg.master_seed = 2;
    cfg.model.type = "burgers";
    cfg.model.n = 399;
    cfg.model.nu = 0.1;
    cfg.model.dt_inner = 2.5e-5;
    cfg.dt = 0.01;
    cfg.n_t = 20;
    cfg.forecast_instances = 81;
    cfg.prior_alpha = 0.5;
    cfg.prior_beta = 500.0;
    cfg.obs_layout = "equispaced15";
    cfg.obs_variance = 0.01;
    cfg.solver.mode = SolveMode::SketchPrec;
    cfg.solver.sketch.method = SketchMethod::RandSVD;
    cfg.solver.sketch.rank = 15;
    cfg.solver.sketch.growth = 5;
    cfg.solver.max_gn_iters = 20;
    cfg.out_dir = "runs/" + name;
    if (name == "burgers_1_2") {
      cfg.study = "first_iterate";
      cfg.forecast_instances = 1;
      cfg.fi_ranks = {5, 10, 15, 20, 25};
      cfg.fi_seeds = 5;
    }
  } else if (name == "burgers_1_1_small") {
    cfg.model.type = "burgers";
    cfg.model.n = 99;
    cfg.model.nu = 0.1;
    cfg.model.dt_inner = 2e-4;
    cfg.dt = 0.01;
    cfg.n_t = 20;
    cfg.forecast_instances = 41;
    cfg.prior_alpha = 0.5;
    cfg.prior_beta = 500.0;
    cfg.obs_variance = 0.01;
    cfg.solver.mode = SolveMode::SketchPrec;
    cfg.solver.sketch.method = SketchMethod::RandSVD;
    cfg.solver.sketch.rank = 15;
    cfg.solver.max_gn_iters = 20;
    cfg.out_dir = "runs/burgers_1_1_small";
  } else if (name == "burgers_1_3") {
    // First-iterate conditioning/spectrum study; sweep n and nu on top.
    cfg.model.type = "burgers";
    cfg.model.n = 399;
    cfg.model.nu = 0.1;
    cfg.model.dt_inner = -1.0;  // derived per cell
    cfg.dt = 0.01;
    cfg.n_t = 20;
    cfg.forecast_instances = 1;
    cfg.study = "first_iterate";
    cfg.prior_alpha = 0.5;
    cfg.prior_beta = 500.0;
    cfg.prior_reference_n = 799;
    cfg.obs_variance = 0.01;
    cfg.fi_ranks = {15};
    cfg.fi_seeds = 1;
    cfg.out_dir = "runs/burgers_1_3";
  } else if (name == "bve_2" || name == "bve_2_full") {
    const bool full = name == "bve_2_full";
    cfg.model.type = "bve";
    cfg.model.nx = full ? 128 : 64;
    cfg.model.ny = full ? 257 : 129;
    cfg.model.reynolds = 200.0;
    cfg.model.rossby = 0.0016;
    cfg.model.spinup_steps = full ? 1200 : 600;
    cfg.dt = 0.001225;
    cfg.model.dt_inner = full ? 0.000245 : 0.001225 / 4.0;
    cfg.n_t = 8;
    cfg.forecast_instances = full ? 17 : 10;
    cfg.prior_alpha = 0.0;
    cfg.prior_beta = 0.06;
    cfg.obs_layout = "grid16x16";
    cfg.obs_variance = 361.0;
    cfg.solver.mode = SolveMode::SketchPrec;
    cfg.solver.sketch.method = SketchMethod::RandSVD;
    cfg.solver.sketch.rank = full ? 384 : 192;
    cfg.solver.sketch.growth = full ? 128 : 64;
    cfg.solver.sketch.eps_sketch = full ? 1.01 : 1.5;
    cfg.solver.sketch.eps_reuse = full ? 10.0 : 50.0;
    cfg.solver.max_gn_iters = full ? 25 : 4;
    cfg.solver.pcg_max_iter = 4000;
    cfg.out_dir = "runs/" + name;
  } else if (name == "bve_smoke") {
    cfg.model.type = "bve";
    cfg.model.nx = 32;
    cfg.model.ny = 65;
    cfg.model.reynolds = 200.0;
    cfg.model.rossby = 0.0016;
    cfg.model.spinup_steps = 300;
    cfg.dt = 0.001225;
    cfg.model.dt_inner = 0.001225 / 3.0;
    cfg.n_t = 2;
    cfg.forecast_instances = 4;
    cfg.prior_alpha = 0.0;
    cfg.prior_beta = 0.06;
    cfg.obs_layout = "grid16x16";
    cfg.obs_variance = 361.0;
    cfg.solver.mode = SolveMode::SketchPrec;
    cfg.solver.sketch.method = SketchMethod::RandSVD;
    cfg.solver.sketch.rank = 24;
    cfg.solver.sketch.growth = 8;
    cfg.solver.max_gn_iters = 2;
    cfg.solver.pcg_max_iter = 2000;
    cfg.out_dir = "runs/bve_smoke";
  } else {
    throw std::invalid_argument("unknown preset: " + name);
  }
  return cfg;
}

void apply_override(ExperimentConfig& cfg, const std::string& key,
                    const std::string& value) {
  auto to_int = [&](const std::string& v) { return std::stoi(v); };
  auto to_double = [&](const std::string& v) { return std::stod(v); };
  auto to_u64 = [&](const std::string& v) { return std::stoull(v); };
  auto to_bool = [&](const std::string& v) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw std::invalid_argument("bad boolean for " + key + ": " + v);
  };

  if (key == "experiment") cfg.experiment = value;
  else if (key == "study") cfg.study = value;
  else if (key == "type") cfg.model.type = value;
  else if (key == "n") cfg.model.n = to_int(value);
  else if (key == "nu") cfg.model.nu = to_double(value);
  else if (key == "nx") cfg.model.nx = to_int(value);
  else if (key == "ny") cfg.model.ny = to_int(value);
  else if (key == "re") cfg.model.reynolds = to_double(value);
  else if (key == "ro") cfg.model.rossby = to_double(value);
  else if (key == "spinup_steps") cfg.model.spinup_steps = to_int(value);
  else if (key == "dt_inner") cfg.model.dt_inner = to_double(value);
  else if (key == "dt") cfg.dt = to_double(value);
  else if (key == "n_t") cfg.n_t = to_int(value);
  else if (key == "n_k") cfg.forecast_instances = to_int(value);
  else if (key == "alpha") cfg.prior_alpha = to_double(value);
  else if (key == "beta") cfg.prior_beta = to_double(value);
  else if (key == "scaled_stencil") cfg.prior_scaled_stencil = to_bool(value);
  else if (key == "reference_n") cfg.prior_reference_n = to_int(value);
  else if (key == "obs_layout") cfg.obs_layout = value;
  else if (key == "obs_variance") cfg.obs_variance = to_double(value);
  else if (key == "noise_scale") cfg.noise_scale = to_double(value);
  else if (key == "mode") cfg.solver.mode = solve_mode_from_string(value);
  else if (key == "method")
    cfg.solver.sketch.method = sketch_method_from_string(value);
  else if (key == "rank") cfg.solver.sketch.rank = to_int(value);
  else if (key == "rank2") cfg.solver.sketch.rank2 = to_int(value);
  else if (key == "growth") cfg.solver.sketch.growth = to_int(value);
  else if (key == "growth2") cfg.solver.sketch.growth2 = to_int(value);
  else if (key == "eps_sketch") cfg.solver.sketch.eps_sketch = to_double(value);
  else if (key == "eps_reuse") cfg.solver.sketch.eps_reuse = to_double(value);
  else if (key == "max_rank") cfg.solver.sketch.max_rank = to_int(value);
  else if (key == "grad_tol") cfg.solver.grad_tol = to_double(value);
  else if (key == "pcg_tol") cfg.solver.pcg_tol = to_double(value);
  else if (key == "max_gn_iters") cfg.solver.max_gn_iters = to_int(value);
  else if (key == "pcg_max_iter") cfg.solver.pcg_max_iter = to_int(value);
  else if (key == "seed") cfg.master_seed = to_u64(value);
  else if (key == "out") cfg.out_dir = value;
  else if (key == "workers") cfg.workers = to_int(value);
  else if (key == "forecast_only") cfg.forecast_only = to_bool(value);
  else if (key == "fi_seeds") cfg.fi_seeds = to_int(value);
  else if (key == "fi_spectrum") cfg.fi_spectrum = to_bool(value);
  else if (key == "fi_pcg") cfg.fi_pcg = to_bool(value);
  else
    throw std::invalid_argument("unknown config key: " + key);
}

ExperimentConfig load_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw std::invalid_argument("cannot open config " + path.string());
  }
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw std::invalid_argument("bad JSON in " + path.string() + ": " +
                                e.what());
  }
  ExperimentConfig cfg;
  if (j.contains("preset")) {
    cfg = preset(j.at("preset").get<std::string>());
  }
  for (const auto& [key, value] : j.items()) {
    if (key == "preset") continue;
    if (key == "fi_ranks") {
      cfg.fi_ranks = value.get<std::vector<int>>();
    } else if (key == "fi_methods") {
      cfg.fi_methods = value.get<std::vector<std::string>>();
    } else if (key == "obs_indices") {
      cfg.obs_indices.clear();
      for (const auto& v : value) {
        cfg.obs_indices.push_back(v.get<Eigen::Index>());
      }
      cfg.obs_layout = "explicit";
    } else {
      apply_override(cfg, key,
                     value.is_string() ? value.get<std::string>()
                                       : value.dump());
    }
  }
  return cfg;
}

Scenario generate_scenario(const ExperimentConfig& cfg) {
  Scenario sc;
  const int spi = resolve_steps_per_interval(cfg);
  const double dt_inner = cfg.dt / spi;

  std::shared_ptr<const DynamicalModel> model;
  PriorCovariance prior;
  std::vector<Eigen::Index> indices;

  if (cfg.model.type == "burgers") {
    const int n = cfg.model.n;
    model = std::make_shared<BurgersModel>(n, cfg.model.nu, dt_inner);
    const double scale =
        cfg.prior_scaled_stencil ? static_cast<double>(n + 1) * (n + 1) : 1.0;
    prior = PriorCovariance::make_1d(n, cfg.prior_alpha, cfg.prior_beta, scale);
    sc.truth0 = burgers_truth(n);
    indices = cfg.obs_layout == "explicit" ? cfg.obs_indices
                                           : burgers_sensor_indices(n);
  } else if (cfg.model.type == "bve") {
    const int nx = cfg.model.nx;
    const int ny = cfg.model.ny;
    auto bve = std::make_shared<BVEModel>(nx, ny, cfg.model.reynolds,
                                          cfg.model.rossby, dt_inner);
    const double sx = cfg.prior_scaled_stencil
                          ? static_cast<double>(nx + 1) * (nx + 1)
                          : 1.0;
    const double sy = cfg.prior_scaled_stencil
                          ? (static_cast<double>(ny + 1) * (ny + 1)) / 4.0
                          : 1.0;
    prior = PriorCovariance::make_2d(nx, ny, cfg.prior_alpha, cfg.prior_beta,
                                     sx, sy);
    sc.truth0 = bve_truth_fixture(*bve, cfg.model.spinup_steps,
                                  mix_seed(cfg.master_seed, kSpinupStream));
    indices = cfg.obs_layout == "explicit" ? cfg.obs_indices
                                           : bve_sensor_indices(nx, ny);
    model = std::move(bve);
  } else {
    throw std::invalid_argument("unknown model type: " + cfg.model.type);
  }

  // Truth trajectory over the window plus the forecast horizon.
  const int horizon =
      std::max(cfg.n_t, std::max(1, cfg.forecast_instances) - 1);
  sc.truth_states.reserve(horizon + 1);
  sc.truth_states.push_back(sc.truth0);
  {
    Vector x = sc.truth0;
    for (int i = 1; i <= horizon; ++i) {
      x = model->forward(x, spi);
      sc.truth_states.push_back(x);
    }
  }

  const Eigen::Index n_obs = static_cast<Eigen::Index>(indices.size());
  Observations obs;
  obs.indices = indices;
  obs.values.resize(n_obs, cfg.n_t);
  obs.variances = Matrix::Constant(n_obs, cfg.n_t, cfg.obs_variance);
  for (int i = 0; i < cfg.n_t; ++i) {
    const Vector noise =
        cfg.noise_scale == 0.0
            ? Vector::Zero(n_obs)
            : Vector(cfg.noise_scale * std::sqrt(cfg.obs_variance) *
                     gaussian_vector(n_obs,
                                     mix_seed(cfg.master_seed, kObsStream + i)));
    for (Eigen::Index k = 0; k < n_obs; ++k) {
      obs.values(k, i) = sc.truth_states[i + 1](indices[k]) + noise(k);
    }
  }

  Vector background;
  if (cfg.model.type == "burgers" && cfg.prior_reference_n > 0) {
    const int ref_n = cfg.prior_reference_n;
    const double ref_scale = cfg.prior_scaled_stencil
                                 ? static_cast<double>(ref_n + 1) * (ref_n + 1)
                                 : 1.0;
    PriorCovariance ref_prior = PriorCovariance::make_1d(
        ref_n, cfg.prior_alpha, cfg.prior_beta, ref_scale);
    const Vector ref_bg = ref_prior.sample_background(
        burgers_truth(ref_n), mix_seed(cfg.master_seed, kBackgroundStream));
    background = interp_linear_dirichlet(ref_bg, cfg.model.n);
  } else {
    background = prior.sample_background(
        sc.truth0, mix_seed(cfg.master_seed, kBackgroundStream));
  }

  sc.problem.model = model;
  sc.problem.prior = std::move(prior);
  sc.problem.background = std::move(background);
  sc.problem.obs = std::move(obs);
  sc.problem.n_t = cfg.n_t;
  sc.problem.steps_per_interval = spi;
  sc.problem.dt_outer = cfg.dt;
  sc.problem.validate();
  return sc;
}

FirstIterateResult first_iterate_study(const ExperimentConfig& cfg,
                                       const Scenario& sc) {
  FirstIterateResult out;
  Counters counters;
  const Evaluation ev = evaluate(sc.problem, sc.problem.background, &counters);
  const MisfitOperator misfit(sc.problem, ev.trajectory);
  const Matrix a = materialize_by_rows(misfit);
  const Matrix h = a.transpose() * a;
  const Eigen::Index n = h.rows();

  Eigen::SelfAdjointEigenSolver<Matrix> eig_h(h);
  out.h_spectrum = eig_h.eigenvalues().reverse().cwiseMax(0.0);
  out.kappa_ih = (1.0 + out.h_spectrum(0)) /
                 (1.0 + out.h_spectrum(out.h_spectrum.size() - 1));

  // Full GN Hessian Gamma^{-1/2} (I + H) Gamma^{-1/2}.
  Matrix gamma_inv_sqrt(n, n);
  {
    Vector e = Vector::Zero(n);
    for (Eigen::Index j = 0; j < n; ++j) {
      e(j) = 1.0;
      gamma_inv_sqrt.col(j) = sc.problem.prior.apply_inv_sqrt(e);
      e(j) = 0.0;
    }
  }
  {
    const Matrix gn = gamma_inv_sqrt *
                      (Matrix::Identity(n, n) + h) * gamma_inv_sqrt;
    Eigen::SelfAdjointEigenSolver<Matrix> eig_gn(
        0.5 * (gn + gn.transpose()), Eigen::EigenvaluesOnly);
    out.kappa_gn_hessian =
        eig_gn.eigenvalues().maxCoeff() / eig_gn.eigenvalues().minCoeff();
  }

  const Vector rhs = -sc.problem.prior.apply_sqrt(ev.gradient);
  const FunctionMap system(n, n, [&h](const Vector& v) {
    return Vector(v + h * v);
  });
  if (cfg.fi_pcg) {
    out.pcg_prec_gamma =
        pcg_solve(system, rhs, nullptr, cfg.solver.pcg_tol,
                  cfg.solver.pcg_max_iter)
            .iterations;
  }

  const DenseMap a_map(a);
  const DenseMap h_map(h);
  for (size_t mi = 0; mi < cfg.fi_methods.size(); ++mi) {
    const SketchMethod method = sketch_method_from_string(cfg.fi_methods[mi]);
    for (const int rank : cfg.fi_ranks) {
      const int n_seeds = method == SketchMethod::Lanczos ? 1 : cfg.fi_seeds;
      for (int s = 0; s < n_seeds; ++s) {
        const std::uint64_t seed = mix_seed(
            cfg.master_seed, kScanStream + mi * 65536 + rank * 64 + s);
        SketchReport rep;
        switch (method) {
          case SketchMethod::RandSVD:
            rep = randsvd_sketch(a_map, rank, seed);
            break;
          case SketchMethod::Nystrom:
            rep = nystrom_sketch(h_map, rank, seed);
            break;
          case SketchMethod::SingleView:
            rep = singleview_sketch(a_map, rank, 2 * rank + 1, seed);
            break;
          case SketchMethod::Lanczos:
            rep = lanczos_sketch(h_map, rank, rhs);
            break;
        }
        FirstIterateRow row;
        row.method = cfg.fi_methods[mi];
        row.rank = rank;
        row.seed_index = s;
        row.kappa_precond = split_precond_condition(h, rep.evd);
        if (cfg.fi_pcg) {
          const LowRankEVD& evd = rep.evd;
          row.pcg_iterations =
              pcg_solve(system, rhs,
                        [&evd](const Vector& r) {
                          return woodbury_apply(evd, r);
                        },
                        cfg.solver.pcg_tol, cfg.solver.pcg_max_iter)
                  .iterations;
        }
        out.rows.push_back(std::move(row));
      }
    }
  }
  return out;
}

namespace {

void write_observations_csv(const fs::path& dir, const Scenario& sc) {
  std::ostringstream os;
  os << "time_index,component,state_index,value\r\n";
  for (int i = 0; i < sc.problem.n_t; ++i) {
    for (Eigen::Index k = 0; k < sc.problem.n_obs(); ++k) {
      os << (i + 1) << "," << k << "," << sc.problem.obs.indices[k] << ","
         << format_csv_double(sc.problem.obs.values(k, i)) << "\r\n";
    }
  }
  write_lines(dir / "observations.csv", os.str());
}

void write_iterations_csv(const fs::path& dir, const GNResult& result) {
  std::ostringstream os;
  os << "k,cost,grad_inf_norm,step_size,pcg_iterations,pcg_converged,"
        "line_search_trials,sketch_recomputed,final_rank,kappa_sk,kappa_re,"
        "offline_tlm,offline_adj,fwd,tlm,adj\r\n";
  for (const GNIterationLog& log : result.iterations) {
    os << log.k << "," << format_csv_double(log.cost) << ","
       << format_csv_double(log.grad_inf_norm) << ","
       << format_csv_double(log.step_size) << "," << log.pcg_iterations << ","
       << bool_str(log.pcg_converged) << "," << log.line_search_trials << ","
       << bool_str(log.sketch_recomputed) << "," << log.final_rank << ","
       << format_csv_double(log.kappa_sk) << ","
       << format_csv_double(log.kappa_re) << "," << log.totals.offline_tlm
       << "," << log.totals.offline_adj << "," << log.totals.fwd << ","
       << log.totals.tlm << "," << log.totals.adj << "\r\n";
  }
  write_lines(dir / "iterations.csv", os.str());
}

void write_error_trajectory_csv(const fs::path& dir,
                                const ExperimentConfig& cfg,
                                const std::vector<double>& analysis_err,
                                const std::vector<double>& forecast_err) {
  std::ostringstream os;
  os << "time_index,time,analysis_rel_error,forecast_rel_error\r\n";
  for (size_t i = 0; i < analysis_err.size(); ++i) {
    os << i << "," << format_csv_double(i * cfg.dt) << ","
       << format_csv_double(analysis_err[i]) << ","
       << format_csv_double(forecast_err[i]) << "\r\n";
  }
  write_lines(dir / "error_trajectory.csv", os.str());
}

void write_summary_csv(const fs::path& dir, const ExperimentConfig& cfg,
                       const RunArtifacts& artifacts,
                       const std::string& status) {
  std::ostringstream os;
  os << "experiment,study,mode,method,rank,state_dim,converged,gn_iterations,"
        "total_pcg,offline_tlm,offline_adj,fwd,tlm,adj,final_cost,"
        "final_grad_rel,status\r\n";
  const GNResult& r = artifacts.result;
  const double g0 = r.iterations.empty() ? 0.0
                                         : r.iterations.front().grad_inf_norm;
  os << cfg.experiment << "," << cfg.study << ","
     << to_string(cfg.solver.mode) << ","
     << to_string(cfg.solver.sketch.method) << "," << cfg.solver.sketch.rank
     << ","
     << (cfg.model.type == "burgers"
             ? cfg.model.n
             : cfg.model.nx * cfg.model.ny)
     << "," << bool_str(r.converged) << "," << r.iterations.size() << ","
     << r.total_pcg << "," << r.counters.offline_tlm << ","
     << r.counters.offline_adj << "," << r.counters.fwd << ","
     << r.counters.tlm << "," << r.counters.adj << ","
     << format_csv_double(r.final_cost) << ","
     << format_csv_double(g0 > 0.0 ? r.final_grad_inf_norm / g0 : 0.0) << ","
     << status << "\r\n";
  write_lines(dir / "summary.csv", os.str());
}

void write_first_iterate_csv(const fs::path& dir,
                             const FirstIterateResult& fi) {
  std::ostringstream os;
  os << "method,rank,seed_index,kappa_precond,pcg_iterations\r\n";
  os << "PrecGamma,0,0," << format_csv_double(fi.kappa_ih) << ","
     << fi.pcg_prec_gamma << "\r\n";
  for (const FirstIterateRow& row : fi.rows) {
    os << row.method << "," << row.rank << "," << row.seed_index << ","
       << format_csv_double(row.kappa_precond) << "," << row.pcg_iterations
       << "\r\n";
  }
  write_lines(dir / "first_iterate.csv", os.str());
}

void write_spectrum_csv(const fs::path& dir, const Vector& spectrum) {
  std::ostringstream os;
  os << "index,eigenvalue\r\n";
  for (Eigen::Index i = 0; i < spectrum.size(); ++i) {
    os << (i + 1) << "," << format_csv_double(spectrum(i)) << "\r\n";
  }
  write_lines(dir / "spectrum.csv", os.str());
}

void write_first_iterate_summary_csv(const fs::path& dir,
                                     const ExperimentConfig& cfg,
                                     const FirstIterateResult& fi) {
  std::ostringstream os;
  os << "experiment,study,n,nu,kappa_ih,kappa_gn_hessian,pcg_prec_gamma,"
        "status\r\n";
  os << cfg.experiment << "," << cfg.study << ","
     << (cfg.model.type == "burgers" ? cfg.model.n
                                     : cfg.model.nx * cfg.model.ny)
     << "," << format_csv_double(cfg.model.nu) << ","
     << format_csv_double(fi.kappa_ih) << ","
     << format_csv_double(fi.kappa_gn_hessian) << "," << fi.pcg_prec_gamma
     << ",ok\r\n";
  write_lines(dir / "summary.csv", os.str());
}

}  // namespace

RunArtifacts run_experiment(const ExperimentConfig& cfg) {
  RunArtifacts artifacts;
  artifacts.dir = cfg.out_dir;
  fs::create_directories(artifacts.dir);

  const Scenario sc = generate_scenario(cfg);
  write_observations_csv(artifacts.dir, sc);

  if (cfg.study == "first_iterate") {
    const FirstIterateResult fi = first_iterate_study(cfg, sc);
    write_first_iterate_csv(artifacts.dir, fi);
    if (cfg.fi_spectrum) {
      write_spectrum_csv(artifacts.dir, fi.h_spectrum);
    }
    write_first_iterate_summary_csv(artifacts.dir, cfg, fi);
    return artifacts;
  }

  GNConfig solver = cfg.solver;
  solver.sketch.seed = mix_seed(cfg.master_seed, kSolverSketchStream);
  solver.sketch.workers = cfg.workers;

  Vector analysis = sc.problem.background;
  std::string status = "ok";
  if (!cfg.forecast_only) {
    try {
      artifacts.result = gn_solve(sc.problem, solver);
      artifacts.solver_ran = true;
      analysis = artifacts.result.analysis;
    } catch (const std::exception& e) {
      status = std::string("failed: ") + e.what();
      artifacts.exit_code = 1;
      write_summary_csv(artifacts.dir, cfg, artifacts, status);
      std::cerr << "[sketchdav] solver failure in " << cfg.experiment << ": "
                << e.what() << "\n";
      return artifacts;
    }
  }

  // Error trajectories: forecast the analysis and the background past the
  // window and compare both against the truth.
  const int instances = std::max(1, cfg.forecast_instances);
  artifacts.analysis_error.resize(instances);
  artifacts.forecast_error.resize(instances);
  Vector xa = analysis;
  Vector xb = sc.problem.background;
  for (int i = 0; i < instances; ++i) {
    if (i > 0) {
      xa = sc.problem.model->forward(xa, sc.problem.steps_per_interval);
      xb = sc.problem.model->forward(xb, sc.problem.steps_per_interval);
    }
    const Vector& truth = sc.truth_states[i];
    const double tn = truth.norm();
    artifacts.analysis_error[i] = (xa - truth).norm() / (tn > 0.0 ? tn : 1.0);
    artifacts.forecast_error[i] = (xb - truth).norm() / (tn > 0.0 ? tn : 1.0);
  }

  write_iterations_csv(artifacts.dir, artifacts.result);
  write_error_trajectory_csv(artifacts.dir, cfg, artifacts.analysis_error,
                             artifacts.forecast_error);
  write_summary_csv(artifacts.dir, cfg, artifacts, status);
  return artifacts;
}

int run_sweep(const ExperimentConfig& base,
              const std::vector<std::pair<std::string,
                                          std::vector<std::string>>>& axes) {
  // Cartesian product of the axis values.
  std::vector<std::vector<std::pair<std::string, std::string>>> points{{}};
  for (const auto& [key, values] : axes) {
    std::vector<std::vector<std::pair<std::string, std::string>>> next;
    for (const auto& point : points) {
      for (const std::string& v : values) {
        auto extended = point;
        extended.emplace_back(key, v);
        next.push_back(std::move(extended));
      }
    }
    points = std::move(next);
  }

  fs::create_directories(base.out_dir);
  std::atomic<int> failures{0};
  std::atomic<size_t> cursor{0};
  std::mutex log_mutex;

  auto worker = [&]() {
    for (;;) {
      const size_t i = cursor.fetch_add(1);
      if (i >= points.size()) {
        return;
      }
      ExperimentConfig cfg = base;
      std::string label = "point_";
      {
        char num[16];
        std::snprintf(num, sizeof(num), "%03zu", i);
        label += num;
      }
      try {
        for (const auto& [key, value] : points[i]) {
          apply_override(cfg, key, value);
          label += "_" + key + "=" + value;
        }
        cfg.out_dir = (fs::path(base.out_dir) / label).string();
        cfg.workers = 1;  // concurrency lives at the sweep level
        const RunArtifacts artifacts = run_experiment(cfg);
        if (artifacts.exit_code != 0) {
          ++failures;
        }
      } catch (const std::exception& e) {
        ++failures;
        std::lock_guard<std::mutex> lock(log_mutex);
        std::cerr << "[sketchdav] sweep point " << label << " failed: "
                  << e.what() << "\n";
      }
    }
  };

  const int n_workers =
      std::max(1, std::min<int>(base.workers,
                                static_cast<int>(points.size())));
  if (n_workers == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < n_workers; ++t) {
      pool.emplace_back(worker);
    }
    for (auto& th : pool) {
      th.join();
    }
  }

  run_report(base.out_dir, std::cout);
  return failures.load() == 0 ? 0 : 1;
}

int run_report(const fs::path& dir, std::ostream& os) {
  if (!fs::exists(dir)) {
    throw std::invalid_argument("report: no such directory " + dir.string());
  }
  std::vector<fs::path> files;
  for (const auto& entry : fs::recursive_directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().filename() == "summary.csv" &&
        entry.path().parent_path() != dir) {
      files.push_back(entry.path());
    }
  }
  std::sort(files.begin(), files.end());

  std::ostringstream collated;
  bool wrote_header = false;
  for (const fs::path& file : files) {
    std::ifstream in(file);
    std::string header, row;
    if (!std::getline(in, header) || !std::getline(in, row)) {
      continue;
    }
    if (!wrote_header) {
      collated << "run," << header << (header.ends_with("\r") ? "\n" : "\r\n");
      wrote_header = true;
    }
    const std::string run =
        fs::relative(file.parent_path(), dir).string();
    collated << run << "," << row << (row.ends_with("\r") ? "\n" : "\r\n");
  }
  const std::string text = collated.str();
  write_lines(dir / "collated.csv", text);
  os << text;
  return 0;
}

int run_verify(std::ostream& os) {
  struct Check {
    std::string name;
    std::function<bool()> fn;
  };

  std::vector<Check> checks;

  checks.push_back({"woodbury matches dense inverse", [] {
    const Matrix g = gaussian_matrix(20, 20, 11);
    const Matrix h = g * g.transpose() / 20.0;
    Eigen::SelfAdjointEigenSolver<Matrix> eig(h);
    LowRankEVD evd;
    evd.basis = eig.eigenvectors().rowwise().reverse();
    evd.eigenvalues = eig.eigenvalues().reverse().cwiseMax(0.0);
    const Vector v = gaussian_vector(20, 3);
    const Vector direct =
        (Matrix::Identity(20, 20) + h).ldlt().solve(v);
    return (woodbury_apply(evd, v) - direct).norm() <= 1e-10 * direct.norm();
  }});

  checks.push_back({"pcg solves a diagonal system", [] {
    Vector d(10);
    for (int i = 0; i < 10; ++i) d(i) = i + 1.0;
    const DenseMap op{Matrix(d.asDiagonal())};
    const Vector rhs = Vector::Ones(10);
    const PCGReport rep = pcg_solve(op, rhs, nullptr, 1e-9, 50);
    const Vector expect = rhs.cwiseQuotient(d);
    return rep.converged && rep.iterations <= 10 &&
           (rep.solution - expect).norm() <= 1e-8 * expect.norm();
  }});

  checks.push_back({"thin QR factors and flags rank deficiency", [] {
    Matrix y = gaussian_matrix(20, 4, 5);
    const ThinQR qr = thin_qr(y);
    const bool good = (qr.q * qr.r - y).norm() <= 1e-12 * y.norm() &&
                      (qr.q.transpose() * qr.q - Matrix::Identity(4, 4))
                              .norm() <= 1e-10;
    y.col(2) = y.col(1);
    const ThinQR qr2 = thin_qr(y);
    return good && !qr2.deficient_columns.empty();
  }});

  checks.push_back({"seeded gaussian sampling is reproducible", [] {
    return gaussian_matrix(50, 3, 99) == gaussian_matrix(50, 3, 99) &&
           gaussian_matrix(50, 3, 99) != gaussian_matrix(50, 3, 100);
  }});

  checks.push_back({"randsvd captures a low-rank operator", [] {
    const Matrix a = gaussian_matrix(12, 4, 7) * gaussian_matrix(4, 20, 8);
    const Matrix h = a.transpose() * a;
    const SketchReport rep = randsvd_sketch(DenseMap(a), 8, 21);
    const Matrix h_hat = rep.evd.basis * rep.evd.eigenvalues.asDiagonal() *
                         rep.evd.basis.transpose();
    return spectral_norm(h - h_hat) <= 1e-9 * spectral_norm(h);
  }});

  checks.push_back({"nystrom captures a low-rank operator", [] {
    const Matrix g = gaussian_matrix(15, 3, 17);
    const Matrix h = g * g.transpose();
    const SketchReport rep = nystrom_sketch(DenseMap(h), 6, 23);
    const Matrix h_hat = rep.evd.basis * rep.evd.eigenvalues.asDiagonal() *
                         rep.evd.basis.transpose();
    return spectral_norm(h - h_hat) <= 1e-6 * spectral_norm(h);
  }});

  checks.push_back({"singleview captures a low-rank operator", [] {
    const Matrix a = gaussian_matrix(12, 4, 31) * gaussian_matrix(4, 20, 32);
    const Matrix h = a.transpose() * a;
    const SketchReport rep = singleview_sketch(DenseMap(a), 9, 19, 33);
    const Matrix h_hat = rep.evd.basis * rep.evd.eigenvalues.asDiagonal() *
                         rep.evd.basis.transpose();
    return spectral_norm(h - h_hat) <= 1e-8 * spectral_norm(h);
  }});

  checks.push_back({"burgers adjoint dot test", [] {
    const BurgersModel model(40, 0.1, 1e-4);
    const Vector x0 = burgers_truth(40);
    const auto traj = model.linearize(x0, 7, 7);
    double worst = 0.0;
    for (int t = 0; t < 20; ++t) {
      const Vector dx = gaussian_vector(40, 1000 + t);
      const Vector lam = gaussian_vector(40, 2000 + t);
      const double lhs = traj->tlm_range(0, 7, dx).dot(lam);
      const double rhs = dx.dot(traj->adj_range(0, 7, lam));
      worst = std::max(worst,
                       std::abs(lhs - rhs) / (dx.norm() * lam.norm()));
    }
    return worst <= 1e-10;
  }});

  checks.push_back({"bve adjoint dot test", [] {
    const BVEModel model(16, 33, 200.0, 0.0016, 1e-4);
    const Vector x0 = 10.0 * gaussian_vector(model.dim(), 4);
    const auto traj = model.linearize(x0, 2, 2);
    double worst = 0.0;
    for (int t = 0; t < 10; ++t) {
      const Vector dx = gaussian_vector(model.dim(), 3000 + t);
      const Vector lam = gaussian_vector(model.dim(), 4000 + t);
      const double lhs = traj->tlm_range(0, 2, dx).dot(lam);
      const double rhs = dx.dot(traj->adj_range(0, 2, lam));
      worst = std::max(worst,
                       std::abs(lhs - rhs) / (dx.norm() * lam.norm()));
    }
    return worst <= 1e-10;
  }});

  checks.push_back({"4dvar gradient against central differences", [] {
    ExperimentConfig cfg = preset("burgers_1_1_small");
    cfg.model.n = 49;
    cfg.model.dt_inner = 4e-4;
    cfg.n_t = 5;
    cfg.forecast_instances = 6;
    const Scenario sc = generate_scenario(cfg);
    const Vector g = gradient(sc.problem, sc.problem.background);
    double worst = 0.0;
    for (int t = 0; t < 5; ++t) {
      Vector dir = gaussian_vector(49, 500 + t);
      dir /= dir.norm();
      const double h = 1e-6;
      const double fp = cost(sc.problem, sc.problem.background + h * dir);
      const double fm = cost(sc.problem, sc.problem.background - h * dir);
      const double fd = (fp - fm) / (2.0 * h);
      worst = std::max(worst, std::abs(fd - g.dot(dir)) /
                                  std::max(1.0, std::abs(g.dot(dir))));
    }
    return worst <= 1e-5;
  }});

  checks.push_back({"psi and theta bound values", [] {
    Vector lam(4);
    lam << 4.0, 1.0, 0.25, 0.0625;
    Vector lam2(2);
    lam2 << 1.0, 0.01;
    return std::abs(psi_bound(lam, 2, 2) - 0.875) <= 1e-15 &&
           std::abs(theta_bound(lam2, 1) - 0.3225) <= 1e-15;
  }});

  int failures = 0;
  for (const Check& check : checks) {
    bool ok = false;
    std::string note;
    try {
      ok = check.fn();
    } catch (const std::exception& e) {
      note = std::string(" (") + e.what() + ")";
    }
    os << (ok ? "PASS" : "FAIL") << "  " << check.name << note << "\n";
    if (!ok) {
      ++failures;
    }
  }
  return failures;
}

}  // namespace sketchdav
