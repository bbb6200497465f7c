#pragma once

#include <functional>

namespace sketchdav {

struct LineSearchConfig {
  double sufficient_decrease = 1e-4;  // ftol
  double curvature = 0.9;             // gtol
  double step_tol = 1e-12;            // xtol, relative bracket width
  double step_min = 1e-20;
  double step_max = 1e20;
  int max_trials = 20;
};

struct LineSearchResult {
  double step = 1.0;
  double f = 0.0;
  double dphi = 0.0;
  int trials = 0;
  bool ok = false;  // strong Wolfe conditions satisfied
};

/// More-Thuente line search: finds a step satisfying the strong Wolfe
/// conditions
///   phi(a) <= phi(0) + ftol a phi'(0)   and   |phi'(a)| <= gtol |phi'(0)|
/// by safeguarded cubic/quadratic interpolation over a shrinking interval of
/// uncertainty. phi evaluates the objective and its directional derivative at
/// a trial step (one model evaluation per trial). Requires phi'(0) < 0.
LineSearchResult more_thuente_search(
    const std::function<std::pair<double, double>(double)>& phi, double f0,
    double dphi0, double initial_step, const LineSearchConfig& cfg);

}  // namespace sketchdav
