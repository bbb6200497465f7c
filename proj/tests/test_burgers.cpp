#include "sketchdav/burgers.hpp"

#include "sketchdav/rng.hpp"

#include <doctest.h>

#include <cmath>
#include <numbers>

using namespace sketchdav;

namespace {

Vector sine_ic(int n) {
  Vector x(n);
  for (int i = 0; i < n; ++i) {
    x(i) = std::sin(std::numbers::pi * (i + 1) / (n + 1));
  }
  return x;
}

// Independently coded semi-discretization and classical RK4 stepper used as
// the high-accuracy time-integration reference.
Vector reference_rhs(const Vector& u, double nu) {
  const int n = static_cast<int>(u.size());
  const double dx = 1.0 / (n + 1);
  Vector f(n);
  for (int i = 0; i < n; ++i) {
    const double um = i > 0 ? u(i - 1) : 0.0;
    const double up = i + 1 < n ? u(i + 1) : 0.0;
    f(i) = -u(i) * (up - um) / (2.0 * dx) + nu * (up - 2.0 * u(i) + um) /
                                                (dx * dx);
  }
  return f;
}

Vector reference_rk4(Vector u, double nu, double dt, int steps) {
  for (int k = 0; k < steps; ++k) {
    const Vector k1 = reference_rhs(u, nu);
    const Vector k2 = reference_rhs(u + 0.5 * dt * k1, nu);
    const Vector k3 = reference_rhs(u + 0.5 * dt * k2, nu);
    const Vector k4 = reference_rhs(u + dt * k3, nu);
    u += dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  }
  return u;
}

}  // namespace

TEST_CASE("zero state is a fixed point") {
  const BurgersModel model(30, 0.1, 1e-4);
  CHECK(model.forward(Vector::Zero(30), 50).norm() == 0.0);
}

TEST_CASE("forward matches a fine-step RK4 reference") {
  const int n = 99;
  const double nu = 0.1;
  const double dt = 2.5e-5;
  const int steps = 400;  // one outer interval of 0.01
  const BurgersModel model(n, nu, dt);
  const Vector x0 = sine_ic(n);
  const Vector ours = model.forward(x0, steps);
  const Vector ref = reference_rk4(x0, nu, dt / 10.0, steps * 10);
  CHECK((ours - ref).norm() <= 1e-6 * ref.norm());
}

TEST_CASE("time stepping is third-order accurate") {
  const int n = 19;
  const double nu = 0.1;
  const double horizon = 0.08;
  const Vector x0 = sine_ic(n);
  const Vector ref = reference_rk4(x0, nu, horizon / 4096.0, 4096);

  std::vector<double> dts, errs;
  for (const int steps : {8, 16, 32, 64}) {
    const BurgersModel model(n, nu, horizon / steps);
    const double err = (model.forward(x0, steps) - ref).norm();
    dts.push_back(std::log(horizon / steps));
    errs.push_back(std::log(err));
  }
  // Least-squares slope of log(error) against log(dt).
  const int m = static_cast<int>(dts.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (int i = 0; i < m; ++i) {
    sx += dts[i];
    sy += errs[i];
    sxx += dts[i] * dts[i];
    sxy += dts[i] * errs[i];
  }
  const double slope = (m * sxy - sx * sy) / (m * sxx - sx * sx);
  CHECK(slope == doctest::Approx(3.0).epsilon(0.2 / 3.0));
}

TEST_CASE("tangent linear model of the zero perturbation is zero") {
  const BurgersModel model(25, 0.05, 1e-4);
  const auto traj = model.linearize(sine_ic(25), 40, 40);
  CHECK(traj->tlm_range(0, 40, Vector::Zero(25)).norm() == 0.0);
  CHECK(traj->adj_range(0, 40, Vector::Zero(25)).norm() == 0.0);
}

TEST_CASE("tangent linear model agrees with finite differences") {
  const int n = 49;
  const BurgersModel model(n, 0.1, 1e-4);
  const Vector x0 = sine_ic(n);
  const int steps = 30;
  const auto traj = model.linearize(x0, steps, steps);
  for (int t = 0; t < 5; ++t) {
    Vector dx = gaussian_vector(n, 700 + t);
    dx /= dx.norm();
    const Vector tlm = traj->tlm_range(0, steps, dx);
    const double h = 1e-6;
    const Vector fwd =
        (model.forward(x0 + h * dx, steps) - model.forward(x0, steps)) / h;
    CHECK((fwd - tlm).norm() <= 1e-5 * tlm.norm());
    const Vector central = (model.forward(x0 + h * dx, steps) -
                            model.forward(x0 - h * dx, steps)) /
                           (2.0 * h);
    CHECK((central - tlm).norm() <= 1e-7 * tlm.norm());
  }
}

TEST_CASE("tangent linear model is exactly homogeneous in powers of two") {
  const BurgersModel model(20, 0.1, 2e-4);
  const auto traj = model.linearize(sine_ic(20), 10, 10);
  const Vector dx = gaussian_vector(20, 42);
  const Vector once = traj->tlm_range(0, 10, dx);
  const Vector scaled = traj->tlm_range(0, 10, Vector(2.0 * dx));
  CHECK(scaled == Vector(2.0 * once));
}

TEST_CASE("adjoint passes the dot test across step counts") {
  const int n = 35;
  const BurgersModel model(n, 0.1, 2.5e-5);
  const Vector x0 = sine_ic(n);
  for (const int steps : {1, 40, 400}) {
    const auto traj = model.linearize(x0, steps, std::min(steps, 50));
    for (int t = 0; t < 34; ++t) {
      const Vector dx = gaussian_vector(n, 900 + t);
      const Vector lam = gaussian_vector(n, 1900 + t);
      const double lhs = traj->tlm_range(0, steps, dx).dot(lam);
      const double rhs = dx.dot(traj->adj_range(0, steps, lam));
      CHECK(std::abs(lhs - rhs) <= 1e-10 * dx.norm() * lam.norm());
    }
  }
}

TEST_CASE("adjoint ranges compose consistently with partial sweeps") {
  const int n = 30;
  const BurgersModel model(n, 0.1, 1e-4);
  const auto traj = model.linearize(sine_ic(n), 60, 20);
  const Vector lam = gaussian_vector(n, 5);
  const Vector full = traj->adj_range(0, 60, lam);
  const Vector split =
      traj->adj_range(0, 20, traj->adj_range(20, 60, lam));
  CHECK((full - split).norm() <= 1e-13 * full.norm());
}

TEST_CASE("at the zero state the dynamics are symmetric so adj equals tlm") {
  const int n = 24;
  const BurgersModel model(n, 0.2, 1e-4);
  const auto traj = model.linearize(Vector::Zero(n), 15, 15);
  const Vector v = gaussian_vector(n, 8);
  const Vector tlm = traj->tlm_range(0, 15, v);
  const Vector adj = traj->adj_range(0, 15, v);
  CHECK((tlm - adj).norm() <= 1e-13 * tlm.norm());
}

TEST_CASE("forward integration is bit-deterministic") {
  const BurgersModel model(40, 0.1, 1e-4);
  const Vector x0 = sine_ic(40);
  CHECK(model.forward(x0, 100) == model.forward(x0, 100));
}

TEST_CASE("instability raises an error naming the step") {
  const BurgersModel model(50, 0.5, 0.1);  // wildly over the CFL limit
  CHECK_THROWS_WITH_AS(model.forward(sine_ic(50), 100),
                       doctest::Contains("non-finite"), std::runtime_error);
}

TEST_CASE("state checkpoints reproduce intermediate states exactly") {
  const int n = 20;
  const BurgersModel model(n, 0.1, 1e-4);
  const Vector x0 = sine_ic(n);
  const auto traj = model.linearize(x0, 55, 10);
  Vector u = x0;
  for (int k = 0; k < 55; ++k) {
    u = model.step(u);
    if (k % 7 == 0 || k == 54) {
      CHECK((traj->state_at(k + 1) - u).norm() == 0.0);
    }
  }
}
