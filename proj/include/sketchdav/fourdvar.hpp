#pragma once

#include "sketchdav/linesearch.hpp"
#include "sketchdav/model.hpp"
#include "sketchdav/prior.hpp"
#include "sketchdav/sketch.hpp"

#include <limits>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace sketchdav {

/// Partial observations O(x) = x[indices] at each of n_t window times, with
/// independent diagonal Gaussian noise per time.
struct Observations {
  std::vector<Eigen::Index> indices;  // strictly increasing, in range
  Matrix values;                      // n_obs x n_t, column i is y_{i+1}
  Matrix variances;                   // n_obs x n_t, all > 0
};

/// Strong-constraint 4D-Var problem over a window of n_t observation
/// intervals, each spanning steps_per_interval inner model steps.
struct AssimilationProblem {
  std::shared_ptr<const DynamicalModel> model;
  PriorCovariance prior;
  Vector background;
  Observations obs;
  int n_t = 0;
  int steps_per_interval = 0;
  double dt_outer = 0.0;

  Eigen::Index state_dim() const { return background.size(); }
  Eigen::Index n_obs() const { return obs.values.rows(); }
  Eigen::Index misfit_dim() const { return obs.values.rows() * n_t; }
  int total_steps() const { return n_t * steps_per_interval; }
  void validate() const;
};

/// PDE-solve counters. fwd/tlm/adj are sequential (online) sweeps over the
/// full window; offline_tlm/offline_adj are the parallelizable batches spent
/// building sketches. kappa probes are charged online.
struct Counters {
  long fwd = 0;
  long tlm = 0;
  long adj = 0;
  long offline_tlm = 0;
  long offline_adj = 0;
};

/// Cost, gradient and the frozen linearization at one point. The gradient is
/// accumulated in a single reverse adjoint sweep that injects every
/// innovation term at its observation time.
struct Evaluation {
  double cost = 0.0;
  Vector gradient;
  std::shared_ptr<const LinearizedTrajectory> trajectory;
  std::vector<Vector> interval_states;  // x_i, i = 0..n_t
};

double cost(const AssimilationProblem& p, const Vector& x0,
            Counters* counters = nullptr);
Vector gradient(const AssimilationProblem& p, const Vector& x0,
                Counters* counters = nullptr);
Evaluation evaluate(const AssimilationProblem& p, const Vector& x0,
                    Counters* counters = nullptr);

/// Prior-preconditioned misfit operator
///   A = [ R_i^{-1/2} O M_{0->i} Gamma^{1/2} ]_{i=1..n_t},
/// frozen at the trajectory it was built from. One apply is one TLM sweep,
/// one adjoint_apply one ADJ sweep; H = A^T A is the data-misfit part of the
/// Gauss-Newton Hessian. The problem must outlive the operator.
class MisfitOperator final : public LinearMap {
 public:
  MisfitOperator(const AssimilationProblem& p,
                 std::shared_ptr<const LinearizedTrajectory> traj);

  Eigen::Index rows() const override { return p_.misfit_dim(); }
  Eigen::Index cols() const override { return p_.state_dim(); }
  Vector apply(const Vector& v) const override;
  Vector adjoint_apply(const Vector& w) const override;

 private:
  const AssimilationProblem& p_;
  std::shared_ptr<const LinearizedTrajectory> traj_;
  Matrix inv_sqrt_r_;  // n_obs x n_t
};

/// Builds the misfit operator at x0 (one forward sweep to freeze the
/// linearization, counted when counters are passed).
std::unique_ptr<MisfitOperator> misfit_operator(const AssimilationProblem& p,
                                                const Vector& x0,
                                                Counters* counters = nullptr);

enum class SolveMode {
  SketchSolv,   // Woodbury solve with the sketch, no PCG
  SketchPrec,   // PCG preconditioned by a sketch rebuilt every iteration
  SketchPrecA,  // adaptive sketch size with kappa_re reuse decision
  PrecGamma,    // first-level preconditioning only
  PrecLanczos,  // Lanczos sketch rebuilt every iteration
  PrecALanczos, // adaptive Lanczos with reuse
};

std::string to_string(SolveMode m);
SolveMode solve_mode_from_string(const std::string& name);

struct GNConfig {
  SolveMode mode = SolveMode::SketchPrec;
  SketchConfig sketch;
  double grad_tol = 1e-6;  // relative infinity-norm gradient tolerance
  double pcg_tol = 1e-9;
  int max_gn_iters = 50;
  int pcg_max_iter = 10000;
  LineSearchConfig line_search;

  void validate() const;
};

struct GNIterationLog {
  int k = 0;
  double cost = 0.0;
  double grad_inf_norm = 0.0;
  double step_size = 0.0;
  int pcg_iterations = 0;
  int line_search_trials = 0;
  bool pcg_converged = true;
  bool sketch_recomputed = false;
  int final_rank = 0;
  double kappa_sk = std::numeric_limits<double>::quiet_NaN();
  double kappa_re = std::numeric_limits<double>::quiet_NaN();
  Counters totals;  // cumulative through this iteration
};

struct GNResult {
  Vector analysis;
  std::vector<GNIterationLog> iterations;
  Counters counters;
  bool converged = false;
  bool line_search_failed = false;
  double final_cost = 0.0;
  double final_grad_inf_norm = 0.0;
  long total_pcg = 0;
};

/// delta x = -Gamma^{1/2} (I - V (L^{-1} + I)^{-1} V^T) Gamma^{1/2} g:
/// the sketched Gauss-Newton step in closed form.
Vector gn_step_sketchsolv(const AssimilationProblem& p, const Vector& grad,
                          const LowRankEVD& evd);

/// Solves (I + H) dxt = -Gamma^{1/2} g by PCG with the Woodbury
/// preconditioner (identity when evd is null) and returns
/// delta x = Gamma^{1/2} dxt together with the PCG report.
std::pair<Vector, PCGReport> gn_step_sketchprec(
    const AssimilationProblem& p, const LinearMap& misfit, const Vector& grad,
    const LowRankEVD* evd, double pcg_tol, int max_iter);

/// Gauss-Newton driver: gradient, termination test, per-mode step, strong
/// Wolfe More-Thuente line search. Starts from the background.
GNResult gn_solve(const AssimilationProblem& p, const GNConfig& cfg);

}  // namespace sketchdav
