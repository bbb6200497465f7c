#include "sketchdav/prior.hpp"

#include "sketchdav/rng.hpp"

#include <stdexcept>

namespace sketchdav {

PriorCovariance PriorCovariance::make_1d(int n, double alpha, double beta,
                                         double stencil_scale) {
  if (n < 1) {
    throw std::invalid_argument("PriorCovariance: n must be >= 1");
  }
  if (alpha < 0.0 || beta < 0.0 || (alpha == 0.0 && beta == 0.0)) {
    throw std::invalid_argument(
        "PriorCovariance: need alpha, beta >= 0 with alpha + beta > 0");
  }
  PriorCovariance p;
  p.dim_ = n;
  p.nx_ = n;
  p.alpha_ = alpha;
  p.beta_ = beta;
  p.sx_ = stencil_scale;
  const double b = beta * stencil_scale;
  p.solver_1d_ =
      std::make_shared<Tridiagonal1D>(n, alpha + 2.0 * b, -b);
  return p;
}

PriorCovariance PriorCovariance::make_2d(int nx, int ny, double alpha,
                                         double beta, double stencil_scale_x,
                                         double stencil_scale_y) {
  if (nx < 1 || ny < 1) {
    throw std::invalid_argument("PriorCovariance: grid must be >= 1x1");
  }
  if (alpha < 0.0 || beta < 0.0 || (alpha == 0.0 && beta == 0.0)) {
    throw std::invalid_argument(
        "PriorCovariance: need alpha, beta >= 0 with alpha + beta > 0");
  }
  PriorCovariance p;
  p.dim_ = static_cast<Eigen::Index>(nx) * ny;
  p.nx_ = nx;
  p.ny_ = ny;
  p.alpha_ = alpha;
  p.beta_ = beta;
  p.sx_ = stencil_scale_x;
  p.sy_ = stencil_scale_y;
  p.solver_2d_ = std::make_shared<DirichletSolver2D>(
      nx, ny, alpha, beta * stencil_scale_x, beta * stencil_scale_y);
  return p;
}

Vector PriorCovariance::apply_inv_sqrt(const Vector& v) const {
  if (v.size() != dim_) {
    throw std::invalid_argument("PriorCovariance: size mismatch");
  }
  if (ny_ == 0) {
    return alpha_ * v + (beta_ * sx_) * neg_laplacian_1d(v);
  }
  Vector lap = neg_laplacian_2d(v, nx_, ny_, beta_ * sx_, beta_ * sy_);
  return alpha_ * v + lap;
}

Vector PriorCovariance::apply_sqrt(const Vector& v) const {
  if (v.size() != dim_) {
    throw std::invalid_argument("PriorCovariance: size mismatch");
  }
  return ny_ == 0 ? solver_1d_->solve(v) : solver_2d_->solve(v);
}

Vector PriorCovariance::sample_background(const Vector& truth,
                                          std::uint64_t seed) const {
  if (truth.size() != dim_) {
    throw std::invalid_argument("PriorCovariance: size mismatch");
  }
  return truth + apply_sqrt(gaussian_vector(dim_, seed));
}

}  // namespace sketchdav
