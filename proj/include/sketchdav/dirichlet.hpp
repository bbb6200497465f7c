#pragma once

#include <Eigen/Core>

#include <memory>

namespace sketchdav {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Eigenvalue of the 1-D second-difference stencil (-1, 2, -1) with
/// homogeneous Dirichlet boundaries: mu_k = 2 - 2 cos(k pi / (n+1)), k = 1..n.
double dirichlet_stencil_eigenvalue(int k, int n);

/// y = (2 u_i - u_{i-1} - u_{i+1}), zero boundary values. This is the
/// *negated, unscaled* 1-D Laplacian stencil; scale by 1/dx^2 for the grid
/// operator.
Vector neg_laplacian_1d(const Vector& u);

/// Same stencil on an nx x ny grid stored column-major in x (index i + nx*j);
/// sx and sy scale the two directions, giving sx*(2u - u_W - u_E) +
/// sy*(2u - u_S - u_N).
Vector neg_laplacian_2d(const Vector& u, int nx, int ny, double sx, double sy);

/// Cached solver for (a I + bx Lx + by Ly) x = v on a Dirichlet grid, where
/// Lx, Ly are the unscaled negated second-difference stencils in each
/// direction. Diagonalized by the discrete sine transform; the transform runs
/// on FFTW (RODFT00) when available and falls back to dense sine-matrix
/// products otherwise. All eigenvalues a + bx mu_x + by mu_y must be positive.
class DirichletSolver2D {
 public:
  DirichletSolver2D(int nx, int ny, double a, double bx, double by);
  ~DirichletSolver2D();

  DirichletSolver2D(const DirichletSolver2D&) = delete;
  DirichletSolver2D& operator=(const DirichletSolver2D&) = delete;
  DirichletSolver2D(DirichletSolver2D&&) noexcept;
  DirichletSolver2D& operator=(DirichletSolver2D&&) noexcept;

  int nx() const;
  int ny() const;

  /// Solves for the grid field packed as a length nx*ny vector. Thread-safe.
  Vector solve(const Vector& rhs) const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

/// Cached factorization of the SPD tridiagonal matrix with constant diagonal
/// d and off-diagonal e (Thomas algorithm; no pivoting needed for the
/// diagonally dominant matrices used here).
class Tridiagonal1D {
 public:
  Tridiagonal1D(int n, double diag, double off);

  Vector solve(const Vector& rhs) const;

 private:
  int n_;
  double off_;
  Vector pivot_;  // forward-elimination denominators
};

}  // namespace sketchdav
