#pragma once

#include "sketchdav/model.hpp"

namespace sketchdav {

/// 1-D viscous Burgers equation u_t + u u_x = nu u_xx on (0, 1) with
/// homogeneous Dirichlet boundaries, discretized with second-order central
/// differences (advective form u * D1 u) on n interior points and advanced
/// with the three-stage Shu-Osher TVD Runge-Kutta scheme. The tangent linear
/// and adjoint models differentiate/transpose every Runge-Kutta stage of the
/// discrete forward map, so the adjoint is exact to roundoff.
class BurgersModel final : public DynamicalModel {
 public:
  /// Warns (stderr) when dt violates the CFL heuristic
  /// dt <= 0.9 min(dx / u_max, dx^2 / (2 nu)) with the reference amplitude
  /// u_max = 1; construction never fails on it.
  BurgersModel(int n, double nu, double dt);

  Eigen::Index dim() const override { return n_; }
  double inner_dt() const override { return dt_; }
  int n() const { return n_; }
  double nu() const { return nu_; }
  double dx() const { return 1.0 / (n_ + 1); }

  /// Semi-discrete right-hand side f(u) = -u D1 u + nu D2 u.
  Vector rhs(const Vector& u) const;
  /// Jacobian-vector product of rhs at u.
  Vector rhs_jacobian(const Vector& u, const Vector& d) const;
  /// Transpose Jacobian-vector product of rhs at u.
  Vector rhs_jacobian_adjoint(const Vector& u, const Vector& lam) const;

  Vector step(const Vector& u) const;

  Vector forward(const Vector& x0, int steps) const override;
  std::shared_ptr<const LinearizedTrajectory> linearize(
      const Vector& x0, int steps, int checkpoint_stride) const override;

 private:
  int n_;
  double nu_;
  double dt_;
};

}  // namespace sketchdav
