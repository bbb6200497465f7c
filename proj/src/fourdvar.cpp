#include "sketchdav/fourdvar.hpp"

#include "sketchdav/rng.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <limits>
#include <map>
#include <stdexcept>

namespace sketchdav {

namespace {

constexpr std::uint64_t kIterSketchStream = 0x736b6574636800;  // per-iteration
constexpr std::uint64_t kReuseStream = 0x7265757365;           // kappa_re probes

void warn(const std::string& msg) {
  std::cerr << "[sketchdav] warning: " << msg << "\n";
}

}  // namespace

void AssimilationProblem::validate() const {
  if (!model) {
    throw std::invalid_argument("AssimilationProblem: missing model");
  }
  if (background.size() != model->dim() || prior.dim() != model->dim()) {
    throw std::invalid_argument(
        "AssimilationProblem: background/prior size mismatch");
  }
  if (n_t < 1 || steps_per_interval < 1) {
    throw std::invalid_argument(
        "AssimilationProblem: need n_t >= 1 and steps_per_interval >= 1");
  }
  if (obs.values.rows() != static_cast<Eigen::Index>(obs.indices.size()) ||
      obs.values.cols() != n_t || obs.variances.rows() != obs.values.rows() ||
      obs.variances.cols() != n_t) {
    throw std::invalid_argument("AssimilationProblem: observation shapes");
  }
  if (obs.values.rows() > model->dim()) {
    throw std::invalid_argument("AssimilationProblem: n_obs > n");
  }
  Eigen::Index prev = -1;
  for (const Eigen::Index idx : obs.indices) {
    if (idx <= prev || idx >= model->dim()) {
      throw std::invalid_argument(
          "AssimilationProblem: observation indices must be strictly "
          "increasing and in range");
    }
    prev = idx;
  }
  if ((obs.variances.array() <= 0.0).any()) {
    throw std::invalid_argument(
        "AssimilationProblem: observation variances must be positive");
  }
}

void GNConfig::validate() const {
  if (!(grad_tol > 0.0 && grad_tol < 1.0) ||
      !(pcg_tol > 0.0 && pcg_tol < 1.0)) {
    throw std::invalid_argument("GNConfig: tolerances must lie in (0, 1)");
  }
  if (max_gn_iters < 1) {
    throw std::invalid_argument("GNConfig: max_gn_iters must be >= 1");
  }
}

double cost(const AssimilationProblem& p, const Vector& x0,
            Counters* counters) {
  p.validate();
  if (x0.size() != p.state_dim()) {
    throw std::invalid_argument("cost: state size mismatch");
  }
  const Vector dxb = x0 - p.background;
  double value = 0.5 * dxb.dot(p.prior.apply_inv(dxb));
  Vector x = x0;
  for (int i = 0; i < p.n_t; ++i) {
    x = p.model->forward(x, p.steps_per_interval);
    for (Eigen::Index k = 0; k < p.n_obs(); ++k) {
      const double innov = x(p.obs.indices[k]) - p.obs.values(k, i);
      value += 0.5 * innov * innov / p.obs.variances(k, i);
    }
  }
  if (counters != nullptr) {
    counters->fwd += 1;
  }
  return value;
}

Evaluation evaluate(const AssimilationProblem& p, const Vector& x0,
                    Counters* counters) {
  p.validate();
  if (x0.size() != p.state_dim()) {
    throw std::invalid_argument("evaluate: state size mismatch");
  }
  Evaluation ev;
  ev.trajectory =
      p.model->linearize(x0, p.total_steps(), p.steps_per_interval);
  ev.interval_states.reserve(p.n_t + 1);
  ev.interval_states.push_back(x0);
  for (int i = 1; i <= p.n_t; ++i) {
    ev.interval_states.push_back(
        ev.trajectory->state_at(i * p.steps_per_interval));
  }

  const Vector dxb = x0 - p.background;
  const Vector inv_dxb = p.prior.apply_inv(dxb);
  ev.cost = 0.5 * dxb.dot(inv_dxb);

  // Reverse sweep: inject R_i^{-1} innovations at their observation times and
  // propagate backwards; all n_t terms accumulate in one ADJ pass.
  Vector lam = Vector::Zero(p.state_dim());
  for (int i = p.n_t; i >= 1; --i) {
    const Vector& xi = ev.interval_states[i];
    for (Eigen::Index k = 0; k < p.n_obs(); ++k) {
      const double innov = xi(p.obs.indices[k]) - p.obs.values(k, i - 1);
      ev.cost += 0.5 * innov * innov / p.obs.variances(k, i - 1);
      lam(p.obs.indices[k]) += innov / p.obs.variances(k, i - 1);
    }
    lam = ev.trajectory->adj_range((i - 1) * p.steps_per_interval,
                                   i * p.steps_per_interval, lam);
  }
  ev.gradient = inv_dxb + lam;

  if (counters != nullptr) {
    counters->fwd += 1;
    counters->adj += 1;
  }
  return ev;
}

Vector gradient(const AssimilationProblem& p, const Vector& x0,
                Counters* counters) {
  return evaluate(p, x0, counters).gradient;
}

MisfitOperator::MisfitOperator(const AssimilationProblem& p,
                               std::shared_ptr<const LinearizedTrajectory> traj)
    : p_(p), traj_(std::move(traj)) {
  inv_sqrt_r_ = p.obs.variances.array().rsqrt();
}

Vector MisfitOperator::apply(const Vector& v) const {
  if (v.size() != cols()) {
    throw std::invalid_argument("MisfitOperator::apply: size mismatch");
  }
  Vector cur = p_.prior.apply_sqrt(v);
  Vector out(rows());
  const Eigen::Index n_obs = p_.n_obs();
  for (int i = 0; i < p_.n_t; ++i) {
    cur = traj_->tlm_range(i * p_.steps_per_interval,
                           (i + 1) * p_.steps_per_interval, cur);
    for (Eigen::Index k = 0; k < n_obs; ++k) {
      out(i * n_obs + k) = cur(p_.obs.indices[k]) * inv_sqrt_r_(k, i);
    }
  }
  return out;
}

Vector MisfitOperator::adjoint_apply(const Vector& w) const {
  if (w.size() != rows()) {
    throw std::invalid_argument("MisfitOperator::adjoint_apply: size mismatch");
  }
  Vector lam = Vector::Zero(cols());
  const Eigen::Index n_obs = p_.n_obs();
  for (int i = p_.n_t - 1; i >= 0; --i) {
    for (Eigen::Index k = 0; k < n_obs; ++k) {
      lam(p_.obs.indices[k]) += w(i * n_obs + k) * inv_sqrt_r_(k, i);
    }
    lam = traj_->adj_range(i * p_.steps_per_interval,
                           (i + 1) * p_.steps_per_interval, lam);
  }
  return p_.prior.apply_sqrt(lam);
}

std::unique_ptr<MisfitOperator> misfit_operator(const AssimilationProblem& p,
                                                const Vector& x0,
                                                Counters* counters) {
  p.validate();
  auto traj = p.model->linearize(x0, p.total_steps(), p.steps_per_interval);
  if (counters != nullptr) {
    counters->fwd += 1;
  }
  return std::make_unique<MisfitOperator>(p, std::move(traj));
}

Vector gn_step_sketchsolv(const AssimilationProblem& p, const Vector& grad,
                          const LowRankEVD& evd) {
  return -p.prior.apply_sqrt(
      woodbury_apply(evd, p.prior.apply_sqrt(grad)));
}

std::pair<Vector, PCGReport> gn_step_sketchprec(
    const AssimilationProblem& p, const LinearMap& misfit, const Vector& grad,
    const LowRankEVD* evd, double pcg_tol, int max_iter) {
  const Eigen::Index n = p.state_dim();
  const GramMap h(misfit);
  const FunctionMap system(n, n, [&h](const Vector& v) {
    return Vector(v + h.apply(v));
  });
  const Vector rhs = -p.prior.apply_sqrt(grad);
  Preconditioner precond;
  if (evd != nullptr) {
    precond = [evd](const Vector& r) { return woodbury_apply(*evd, r); };
  }
  PCGReport report = pcg_solve(system, rhs, precond, pcg_tol, max_iter);
  Vector dx = p.prior.apply_sqrt(report.solution);
  return {std::move(dx), std::move(report)};
}

GNResult gn_solve(const AssimilationProblem& p, const GNConfig& cfg) {
  p.validate();
  cfg.validate();

  GNResult result;
  Counters counters;
  Vector x = p.background;
  Evaluation ev = evaluate(p, x, &counters);
  const double g0 = ev.gradient.lpNorm<Eigen::Infinity>();
  if (g0 == 0.0) {
    result.analysis = x;
    result.converged = true;
    result.counters = counters;
    result.final_cost = ev.cost;
    return result;
  }

  std::optional<LowRankEVD> held;
  int held_rank = 0;
  const bool adaptive_mode = cfg.mode == SolveMode::SketchPrecA ||
                             cfg.mode == SolveMode::PrecALanczos;
  const bool lanczos_mode = cfg.mode == SolveMode::PrecLanczos ||
                            cfg.mode == SolveMode::PrecALanczos ||
                            cfg.sketch.method == SketchMethod::Lanczos;

  for (int k = 0; k < cfg.max_gn_iters; ++k) {
    const double gnorm = ev.gradient.lpNorm<Eigen::Infinity>();
    if (gnorm / g0 < cfg.grad_tol) {
      result.converged = true;
      break;
    }

    GNIterationLog log;
    log.k = k;
    log.cost = ev.cost;
    log.grad_inf_norm = gnorm;

    const MisfitOperator misfit(p, ev.trajectory);
    const CountingMap a_offline(misfit);  // sketch column batches
    const CountingMap a_online(misfit);   // PCG applies and kappa probes
    const GramMap h_offline(a_offline);
    const GramMap h_online(a_online);
    const Vector rhs = -p.prior.apply_sqrt(ev.gradient);

    // Decide whether this iteration reuses the held sketch.
    bool build = cfg.mode != SolveMode::PrecGamma;
    if (adaptive_mode && held.has_value()) {
      const double kappa_re = cond_estimate(
          h_online, *held, mix_seed(cfg.sketch.seed, kReuseStream + k));
      log.kappa_re = kappa_re;
      if (kappa_re < cfg.sketch.eps_reuse) {
        build = false;
        log.final_rank = held_rank;
      }
    }

    if (build && cfg.mode != SolveMode::PrecGamma) {
      SketchConfig scfg = cfg.sketch;
      scfg.seed = mix_seed(cfg.sketch.seed, kIterSketchStream + k);
      SketchReport rep;
      if (cfg.mode == SolveMode::PrecLanczos ||
          (!adaptive_mode && lanczos_mode)) {
        rep = lanczos_sketch(h_online, scfg.rank, rhs);
      } else if (cfg.mode == SolveMode::PrecALanczos) {
        rep = adaptive_lanczos(h_online, scfg, rhs, &h_online);
      } else if (adaptive_mode) {
        switch (scfg.method) {
          case SketchMethod::RandSVD:
            rep = adaptive_randsvd(a_offline, scfg, h_online);
            break;
          case SketchMethod::Nystrom:
            rep = adaptive_nystrom(h_offline, scfg, &h_online);
            break;
          case SketchMethod::SingleView:
            rep = adaptive_singleview(a_offline, scfg, h_online);
            break;
          case SketchMethod::Lanczos:
            rep = adaptive_lanczos(h_online, scfg, rhs, &h_online);
            break;
        }
      } else {
        switch (scfg.method) {
          case SketchMethod::RandSVD:
            rep = randsvd_sketch(a_offline, scfg.rank, scfg.seed,
                                 scfg.workers);
            break;
          case SketchMethod::Nystrom:
            rep = nystrom_sketch(h_offline, scfg.rank, scfg.seed,
                                 scfg.workers);
            break;
          case SketchMethod::SingleView:
            rep = singleview_sketch(a_offline, scfg.rank,
                                    scfg.resolved_rank2(), scfg.seed,
                                    scfg.workers);
            break;
          case SketchMethod::Lanczos:
            rep = lanczos_sketch(h_online, scfg.rank, rhs);
            break;
        }
      }
      held = std::move(rep.evd);
      held_rank = rep.final_rank;
      log.sketch_recomputed = true;
      log.final_rank = rep.final_rank;
      if (!rep.kappa_history.empty()) {
        log.kappa_sk = rep.kappa_history.back();
      }
      if (!rep.tolerance_met) {
        warn("gn_solve: adaptive sketch hit its rank cap at GN iteration " +
             std::to_string(k));
      }
    }

    // Step computation.
    Vector dx;
    if (cfg.mode == SolveMode::SketchSolv) {
      dx = gn_step_sketchsolv(p, ev.gradient, *held);
    } else {
      const LowRankEVD* precond =
          cfg.mode == SolveMode::PrecGamma ? nullptr : &*held;
      const FunctionMap system(
          p.state_dim(), p.state_dim(),
          [&h_online](const Vector& v) { return Vector(v + h_online.apply(v)); });
      Preconditioner m_inv;
      if (precond != nullptr) {
        m_inv = [precond](const Vector& r) {
          return woodbury_apply(*precond, r);
        };
      }
      PCGReport pcg = pcg_solve(system, rhs, m_inv, cfg.pcg_tol,
                                cfg.pcg_max_iter);
      if (!pcg.converged) {
        warn("gn_solve: PCG did not reach tolerance at GN iteration " +
             std::to_string(k) + "; continuing with the best iterate");
      }
      log.pcg_iterations = pcg.iterations;
      log.pcg_converged = pcg.converged;
      result.total_pcg += pcg.iterations;
      dx = p.prior.apply_sqrt(pcg.solution);
    }

    // Charge the operator workloads of this iteration.
    counters.offline_tlm += a_offline.applies();
    counters.offline_adj += a_offline.adjoint_applies();
    counters.tlm += a_online.applies();
    counters.adj += a_online.adjoint_applies();

    // Strong Wolfe line search along dx; each trial costs one FWD + one ADJ
    // and the accepted trial's evaluation seeds the next iteration.
    const double dphi0 = ev.gradient.dot(dx);
    std::map<double, Evaluation> trials;
    bool accepted = false;
    if (dphi0 < 0.0) {
      auto phi = [&](double a) {
        auto [it, inserted] = trials.try_emplace(a);
        if (inserted) {
          it->second = evaluate(p, Vector(x + a * dx), &counters);
        }
        return std::make_pair(it->second.cost, it->second.gradient.dot(dx));
      };
      const LineSearchResult ls =
          more_thuente_search(phi, ev.cost, dphi0, 1.0, cfg.line_search);
      log.line_search_trials = ls.trials;
      if (ls.ok && ls.step > 0.0) {
        x += ls.step * dx;
        ev = std::move(trials.at(ls.step));
        log.step_size = ls.step;
        accepted = true;
      }
    } else {
      warn("gn_solve: step is not a descent direction at GN iteration " +
           std::to_string(k));
    }
    if (!accepted) {
      // Fall back to a unit step; give up if it does not decrease the cost.
      auto it = trials.find(1.0);
      if (it == trials.end()) {
        it = trials.emplace(1.0, evaluate(p, Vector(x + dx), &counters)).first;
        ++log.line_search_trials;
      }
      if (it->second.cost < ev.cost) {
        warn("gn_solve: line search failed at GN iteration " +
             std::to_string(k) + "; accepting the unit step");
        x += dx;
        ev = std::move(it->second);
        log.step_size = 1.0;
      } else {
        warn("gn_solve: line search failed and the unit step increases the "
             "cost; terminating at GN iteration " + std::to_string(k));
        result.line_search_failed = true;
        log.totals = counters;
        result.iterations.push_back(std::move(log));
        break;
      }
    }

    log.totals = counters;
    result.iterations.push_back(std::move(log));
  }

  if (!result.line_search_failed && !result.converged) {
    const double gnorm = ev.gradient.lpNorm<Eigen::Infinity>();
    result.converged = gnorm / g0 < cfg.grad_tol;
  }
  result.analysis = std::move(x);
  result.counters = counters;
  result.final_cost = ev.cost;
  result.final_grad_inf_norm = ev.gradient.lpNorm<Eigen::Infinity>();
  return result;
}

std::string to_string(SolveMode m) {
  switch (m) {
    case SolveMode::SketchSolv: return "SketchSolv";
    case SolveMode::SketchPrec: return "SketchPrec";
    case SolveMode::SketchPrecA: return "SketchPrecA";
    case SolveMode::PrecGamma: return "PrecGamma";
    case SolveMode::PrecLanczos: return "PrecLanczos";
    case SolveMode::PrecALanczos: return "PrecALanczos";
  }
  return "?";
}

SolveMode solve_mode_from_string(const std::string& name) {
  if (name == "SketchSolv") return SolveMode::SketchSolv;
  if (name == "SketchPrec") return SolveMode::SketchPrec;
  if (name == "SketchPrecA") return SolveMode::SketchPrecA;
  if (name == "PrecGamma" || name == "Prec_Gamma") return SolveMode::PrecGamma;
  if (name == "PrecLanczos" || name == "Prec_Lanczos")
    return SolveMode::PrecLanczos;
  if (name == "PrecALanczos" || name == "PrecA_Lanczos")
    return SolveMode::PrecALanczos;
  throw std::invalid_argument("unknown solve mode: " + name);
}

}  // namespace sketchdav
