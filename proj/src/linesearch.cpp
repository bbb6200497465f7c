#include "sketchdav/linesearch.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace sketchdav {

namespace {

// Trial value selection of More & Thuente (dcstep): safeguarded cubic and
// quadratic interpolation cases on the interval of uncertainty [stx, sty].
double dcstep(double& stx, double& fx, double& dx, double& sty, double& fy,
              double& dy, double stp, double fp, double dp, bool& brackt,
              double stpmin, double stpmax) {
  const double sgnd = dp * (dx / std::abs(dx));
  double stpf = stp;

  if (fp > fx) {
    // First case: higher function value. The minimum is bracketed.
    const double theta = 3.0 * (fx - fp) / (stp - stx) + dx + dp;
    const double s = std::max({std::abs(theta), std::abs(dx), std::abs(dp)});
    double gamma = s * std::sqrt((theta / s) * (theta / s) -
                                 (dx / s) * (dp / s));
    if (stp < stx) gamma = -gamma;
    const double p = (gamma - dx) + theta;
    const double q = ((gamma - dx) + gamma) + dp;
    const double r = p / q;
    const double stpc = stx + r * (stp - stx);
    const double stpq =
        stx + ((dx / ((fx - fp) / (stp - stx) + dx)) / 2.0) * (stp - stx);
    if (std::abs(stpc - stx) < std::abs(stpq - stx)) {
      stpf = stpc;
    } else {
      stpf = stpc + (stpq - stpc) / 2.0;
    }
    brackt = true;
  } else if (sgnd < 0.0) {
    // Second case: lower value, derivatives of opposite sign.
    const double theta = 3.0 * (fx - fp) / (stp - stx) + dx + dp;
    const double s = std::max({std::abs(theta), std::abs(dx), std::abs(dp)});
    double gamma = s * std::sqrt((theta / s) * (theta / s) -
                                 (dx / s) * (dp / s));
    if (stp > stx) gamma = -gamma;
    const double p = (gamma - dp) + theta;
    const double q = ((gamma - dp) + gamma) + dx;
    const double r = p / q;
    const double stpc = stp + r * (stx - stp);
    const double stpq = stp + (dp / (dp - dx)) * (stx - stp);
    stpf = std::abs(stpc - stp) > std::abs(stpq - stp) ? stpc : stpq;
    brackt = true;
  } else if (std::abs(dp) < std::abs(dx)) {
    // Third case: lower value, same sign, decreasing derivative magnitude.
    const double theta = 3.0 * (fx - fp) / (stp - stx) + dx + dp;
    const double s = std::max({std::abs(theta), std::abs(dx), std::abs(dp)});
    double gamma = s * std::sqrt(std::max(
        0.0, (theta / s) * (theta / s) - (dx / s) * (dp / s)));
    if (stp > stx) gamma = -gamma;
    const double p = (gamma - dp) + theta;
    const double q = (gamma + (dx - dp)) + gamma;
    const double r = p / q;
    double stpc;
    if (r < 0.0 && gamma != 0.0) {
      stpc = stp + r * (stx - stp);
    } else if (stp > stx) {
      stpc = stpmax;
    } else {
      stpc = stpmin;
    }
    const double stpq = stp + (dp / (dp - dx)) * (stx - stp);
    if (brackt) {
      stpf = std::abs(stpc - stp) < std::abs(stpq - stp) ? stpc : stpq;
      if (stp > stx) {
        stpf = std::min(stp + 0.66 * (sty - stp), stpf);
      } else {
        stpf = std::max(stp + 0.66 * (sty - stp), stpf);
      }
    } else {
      stpf = std::abs(stpc - stp) > std::abs(stpq - stp) ? stpc : stpq;
      stpf = std::clamp(stpf, stpmin, stpmax);
    }
  } else {
    // Fourth case: lower value, same sign, non-decreasing magnitude.
    if (brackt) {
      const double theta = 3.0 * (fp - fy) / (sty - stp) + dy + dp;
      const double s = std::max({std::abs(theta), std::abs(dy), std::abs(dp)});
      double gamma = s * std::sqrt((theta / s) * (theta / s) -
                                   (dy / s) * (dp / s));
      if (stp > sty) gamma = -gamma;
      const double p = (gamma - dp) + theta;
      const double q = ((gamma - dp) + gamma) + dy;
      const double r = p / q;
      stpf = stp + r * (sty - stp);
    } else if (stp > stx) {
      stpf = stpmax;
    } else {
      stpf = stpmin;
    }
  }

  // Update the interval of uncertainty.
  if (fp > fx) {
    sty = stp;
    fy = fp;
    dy = dp;
  } else {
    if (sgnd < 0.0) {
      sty = stx;
      fy = fx;
      dy = dx;
    }
    stx = stp;
    fx = fp;
    dx = dp;
  }
  return std::clamp(stpf, stpmin, stpmax);
}

}  // namespace

LineSearchResult more_thuente_search(
    const std::function<std::pair<double, double>(double)>& phi, double f0,
    double dphi0, double initial_step, const LineSearchConfig& cfg) {
  if (!(dphi0 < 0.0)) {
    throw std::invalid_argument(
        "more_thuente_search: direction is not a descent direction");
  }
  constexpr double kExtrapLower = 1.1;
  constexpr double kExtrapUpper = 4.0;

  LineSearchResult result;
  const double gtest = cfg.sufficient_decrease * dphi0;

  bool brackt = false;
  int stage = 1;
  double width = cfg.step_max - cfg.step_min;
  double width1 = 2.0 * width;

  double stx = 0.0, fx = f0, gx = dphi0;
  double sty = 0.0, fy = f0, gy = dphi0;
  double stp = std::clamp(initial_step, cfg.step_min, cfg.step_max);
  double stmin = 0.0;
  double stmax = stp + kExtrapUpper * stp;

  double f = f0, g = dphi0;
  while (result.trials < cfg.max_trials) {
    std::tie(f, g) = phi(stp);
    ++result.trials;
    const double ftest = f0 + stp * gtest;

    if (stage == 1 && f <= ftest && g >= 0.0) {
      stage = 2;
    }
    if (f <= ftest && std::abs(g) <= cfg.curvature * (-dphi0)) {
      result.ok = true;
      result.step = stp;
      result.f = f;
      result.dphi = g;
      return result;
    }
    // Unrecoverable situations: rounding errors, interval collapse, or the
    // search pinned at a bound.
    if ((brackt && (stp <= stmin || stp >= stmax)) ||
        (brackt && stmax - stmin <= cfg.step_tol * stmax) ||
        (stp == cfg.step_max && f <= ftest && g <= gtest) ||
        (stp == cfg.step_min && (f > ftest || g >= gtest))) {
      break;
    }

    if (stage == 1 && f <= fx && f > ftest) {
      // Work with the modified function psi(a) = phi(a) - phi(0) - ftol a
      // phi'(0) until a lower value with nonnegative slope is found.
      double fm = f - stp * gtest;
      double fxm = fx - stx * gtest;
      double fym = fy - sty * gtest;
      double gm = g - gtest;
      double gxm = gx - gtest;
      double gym = gy - gtest;
      stp = dcstep(stx, fxm, gxm, sty, fym, gym, stp, fm, gm, brackt, stmin,
                   stmax);
      fx = fxm + stx * gtest;
      fy = fym + sty * gtest;
      gx = gxm + gtest;
      gy = gym + gtest;
    } else {
      stp = dcstep(stx, fx, gx, sty, fy, gy, stp, f, g, brackt, stmin, stmax);
    }

    if (brackt) {
      if (std::abs(sty - stx) >= 0.66 * width1) {
        stp = stx + 0.5 * (sty - stx);
      }
      width1 = width;
      width = std::abs(sty - stx);
      stmin = std::min(stx, sty);
      stmax = std::max(stx, sty);
    } else {
      stmin = stp + kExtrapLower * (stp - stx);
      stmax = stp + kExtrapUpper * (stp - stx);
    }
    stp = std::clamp(stp, cfg.step_min, cfg.step_max);
    if ((brackt && (stp <= stmin || stp >= stmax)) ||
        (brackt && stmax - stmin <= cfg.step_tol * stmax)) {
      stp = stx;
    }
  }

  // Failed: report the best step seen (stx carries the lowest psi-value).
  result.ok = false;
  result.step = stx;
  result.f = fx;
  result.dphi = gx;
  return result;
}

}  // namespace sketchdav
