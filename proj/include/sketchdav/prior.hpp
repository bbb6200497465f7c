#pragma once

#include "sketchdav/dirichlet.hpp"
#include "sketchdav/linalg.hpp"

#include <cstdint>
#include <memory>

namespace sketchdav {

/// Background covariance Gamma = (alpha I - beta Lap*)^{-2} on a 1-D or 2-D
/// Dirichlet grid. Since Gamma is an even power, the symmetric square root
/// is exact: Gamma^{-1/2} = alpha I - beta Lap* (a stencil matvec) and
/// Gamma^{1/2} its cached direct solve.
///
/// Lap* is the raw second-difference stencil when stencil_scale = 1 (the
/// convention matching the reference experiments); pass 1/dx^2 to get the
/// grid-scaled operator instead.
class PriorCovariance {
 public:
  PriorCovariance() = default;  // empty; dim() == 0 until assigned

  static PriorCovariance make_1d(int n, double alpha, double beta,
                                 double stencil_scale = 1.0);
  static PriorCovariance make_2d(int nx, int ny, double alpha, double beta,
                                 double stencil_scale_x = 1.0,
                                 double stencil_scale_y = 1.0);

  Eigen::Index dim() const { return dim_; }
  double alpha() const { return alpha_; }
  double beta() const { return beta_; }

  /// Gamma^{-1/2} v = (alpha I - beta Lap*) v.
  Vector apply_inv_sqrt(const Vector& v) const;

  /// Gamma^{1/2} v: solves (alpha I - beta Lap*) x = v.
  Vector apply_sqrt(const Vector& v) const;

  /// Gamma^{-1} v (two stencil applications).
  Vector apply_inv(const Vector& v) const { return apply_inv_sqrt(apply_inv_sqrt(v)); }

  /// truth + Gamma^{1/2} xi with xi ~ N(0, I) from the given seed.
  Vector sample_background(const Vector& truth, std::uint64_t seed) const;

 private:
  Eigen::Index dim_ = 0;
  int nx_ = 0, ny_ = 0;  // ny_ == 0 for 1-D
  double alpha_ = 0.0, beta_ = 0.0;
  double sx_ = 1.0, sy_ = 1.0;
  std::shared_ptr<const Tridiagonal1D> solver_1d_;
  std::shared_ptr<const DirichletSolver2D> solver_2d_;
};

}  // namespace sketchdav
