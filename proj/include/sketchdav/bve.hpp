#pragma once

#include "sketchdav/dirichlet.hpp"
#include "sketchdav/model.hpp"

#include <memory>

namespace sketchdav {

/// Barotropic vorticity equation in vorticity-streamfunction form on
/// (0,1) x (-1,1) with homogeneous Dirichlet boundaries on omega and psi:
///
///   omega_t + (psi_y omega_x - psi_x omega_y) - Ro^{-1} psi_x
///       = Re^{-1} Lap omega + Ro^{-1} F,      Lap psi = -omega,
///
/// double-gyre forcing F = sin(pi y), second-order central differences and
/// RK3-TVD stepping with one Poisson solve per stage. The Poisson operator is
/// linear and self-adjoint, so its tangent linear and adjoint are both the
/// solve itself; the advection terms are differentiated stage by stage.
/// Fields are stored column-major in x (index i + nx*j).
class BVEModel final : public DynamicalModel {
 public:
  BVEModel(int nx, int ny, double reynolds, double rossby, double dt);

  Eigen::Index dim() const override {
    return static_cast<Eigen::Index>(nx_) * ny_;
  }
  double inner_dt() const override { return dt_; }
  int nx() const { return nx_; }
  int ny() const { return ny_; }
  double reynolds() const { return re_; }
  double rossby() const { return ro_; }
  double dx() const { return 1.0 / (nx_ + 1); }
  double dy() const { return 2.0 / (ny_ + 1); }
  const Vector& forcing() const { return forcing_; }

  /// psi with Lap psi = -omega (5-point stencil, Dirichlet), residual at the
  /// level of the sine-transform solve (~1e-13 relative).
  Vector poisson_solve(const Vector& omega) const;

  /// Semi-discrete tendency of omega.
  Vector rhs(const Vector& omega) const;

  Vector step(const Vector& omega) const;

  Vector forward(const Vector& x0, int steps) const override;
  std::shared_ptr<const LinearizedTrajectory> linearize(
      const Vector& x0, int steps, int checkpoint_stride) const override;

  // Stencil building blocks, exposed for the linearization and tests.
  Vector d_x(const Vector& f) const;
  Vector d_y(const Vector& f) const;
  Vector laplacian(const Vector& f) const;

 private:
  int nx_, ny_;
  double re_, ro_, dt_;
  Vector forcing_;
  std::shared_ptr<const DirichletSolver2D> poisson_;
};

}  // namespace sketchdav
