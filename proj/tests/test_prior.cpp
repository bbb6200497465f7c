#include "sketchdav/prior.hpp"

#include "sketchdav/dirichlet.hpp"
#include "sketchdav/rng.hpp"

#include <doctest.h>

#include <Eigen/Dense>

#include <cmath>
#include <numbers>

using namespace sketchdav;

namespace {

Vector sine_mode_1d(int n, int k) {
  Vector v(n);
  for (int i = 0; i < n; ++i) {
    v(i) = std::sin((i + 1.0) * k * std::numbers::pi / (n + 1));
  }
  return v;
}

}  // namespace

TEST_CASE("inv sqrt with beta = 0 is a pure scaling") {
  const PriorCovariance p = PriorCovariance::make_1d(10, 2.0, 0.0);
  const Vector v = gaussian_vector(10, 1);
  CHECK((p.apply_inv_sqrt(v) - 2.0 * v).norm() <= 1e-15 * v.norm());
}

TEST_CASE("sine modes are eigenvectors of the inverse square root") {
  // Unscaled stencil: eigenvalue alpha + beta (2 - 2 cos(k pi/(n+1))); the
  // grid-scaled variant divides the stencil eigenvalue by dx^2.
  const int n = 16;
  const double alpha = 0.5;
  const double beta = 3.0;
  for (const double scale :
       {1.0, static_cast<double>(n + 1) * (n + 1)}) {
    const PriorCovariance p = PriorCovariance::make_1d(n, alpha, beta, scale);
    for (int k = 1; k <= n; k += 5) {
      const Vector v = sine_mode_1d(n, k);
      const double mu = dirichlet_stencil_eigenvalue(k, n) * scale;
      const Vector expect = (alpha + beta * mu) * v;
      CHECK((p.apply_inv_sqrt(v) - expect).norm() <= 1e-10 * expect.norm());
    }
  }
}

TEST_CASE("sqrt and inverse sqrt round trip in both orders") {
  const PriorCovariance p = PriorCovariance::make_1d(25, 0.5, 500.0);
  const Vector v = gaussian_vector(25, 3);
  CHECK((p.apply_sqrt(p.apply_inv_sqrt(v)) - v).norm() <= 1e-10 * v.norm());
  CHECK((p.apply_inv_sqrt(p.apply_sqrt(v)) - v).norm() <= 1e-10 * v.norm());
}

TEST_CASE("2-D sqrt and inverse sqrt round trip") {
  const PriorCovariance p = PriorCovariance::make_2d(12, 9, 0.0, 0.06);
  const Vector v = gaussian_vector(12 * 9, 4);
  CHECK((p.apply_sqrt(p.apply_inv_sqrt(v)) - v).norm() <= 1e-10 * v.norm());
}

TEST_CASE("sqrt apply is symmetric and positive definite") {
  const PriorCovariance p = PriorCovariance::make_1d(20, 0.5, 500.0);
  for (int t = 0; t < 10; ++t) {
    const Vector u = gaussian_vector(20, 10 + t);
    const Vector v = gaussian_vector(20, 50 + t);
    const double lhs = p.apply_sqrt(u).dot(v);
    const double rhs = u.dot(p.apply_sqrt(v));
    CHECK(std::abs(lhs - rhs) <= 1e-10 * u.norm() * v.norm());
    CHECK(p.apply_sqrt(u).dot(u) > 0.0);
  }
}

TEST_CASE("solve residual is at machine precision") {
  const PriorCovariance p = PriorCovariance::make_1d(50, 0.5, 500.0);
  const Vector v = gaussian_vector(50, 6);
  const Vector x = p.apply_sqrt(v);
  CHECK((p.apply_inv_sqrt(x) - v).norm() <= 1e-12 * v.norm());
}

TEST_CASE("background sampling is reproducible and respects beta = 0") {
  const PriorCovariance p = PriorCovariance::make_1d(12, 1.0, 0.0);
  const Vector truth = gaussian_vector(12, 7);
  const Vector b1 = p.sample_background(truth, 99);
  const Vector b2 = p.sample_background(truth, 99);
  CHECK(b1 == b2);
  // alpha = 1, beta = 0: Gamma^{1/2} = I, so the perturbation is the raw draw.
  CHECK(b1 == Vector(truth + gaussian_vector(12, 99)));
}

TEST_CASE("sample covariance matches the dense covariance entrywise") {
  // 16-point grid; compare the empirical covariance of Gamma^{1/2} xi
  // against the dense Gamma = ((alpha I - beta Lap*)^2)^{-1}.
  const int n = 16;
  const double alpha = 1.0;
  const double beta = 4.0;
  const PriorCovariance p = PriorCovariance::make_1d(n, alpha, beta);

  Matrix op(n, n);
  Vector e = Vector::Zero(n);
  for (int j = 0; j < n; ++j) {
    e(j) = 1.0;
    op.col(j) = p.apply_inv_sqrt(e);
    e(j) = 0.0;
  }
  const Matrix gamma = (op * op).inverse();

  Matrix emp = Matrix::Zero(n, n);
  const int samples = 10000;
  for (int s = 0; s < samples; ++s) {
    const Vector draw = p.apply_sqrt(gaussian_vector(n, 10000 + s));
    emp += draw * draw.transpose() / samples;
  }
  const double tol = 0.05 * gamma.cwiseAbs().maxCoeff();
  CHECK((emp - gamma).cwiseAbs().maxCoeff() <= tol);
}

TEST_CASE("prior validates its parameters") {
  CHECK_THROWS_AS(PriorCovariance::make_1d(0, 1.0, 1.0),
                  std::invalid_argument);
  CHECK_THROWS_AS(PriorCovariance::make_1d(5, 0.0, 0.0),
                  std::invalid_argument);
  CHECK_THROWS_AS(PriorCovariance::make_1d(5, -1.0, 1.0),
                  std::invalid_argument);
  const PriorCovariance p = PriorCovariance::make_1d(5, 1.0, 1.0);
  CHECK_THROWS_AS(p.apply_sqrt(Vector::Ones(6)), std::invalid_argument);
}
