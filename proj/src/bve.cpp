#include "sketchdav/bve.hpp"

#include <array>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <vector>

namespace sketchdav {

BVEModel::BVEModel(int nx, int ny, double reynolds, double rossby, double dt)
    : nx_(nx), ny_(ny), re_(reynolds), ro_(rossby), dt_(dt) {
  if (nx < 3 || ny < 3 || reynolds <= 0.0 || rossby <= 0.0 || dt <= 0.0) {
    throw std::invalid_argument("BVEModel: invalid parameters");
  }
  forcing_.resize(dim());
  for (int j = 0; j < ny; ++j) {
    const double y = -1.0 + (j + 1) * dy();
    const double f = std::sin(std::numbers::pi * y);
    for (int i = 0; i < nx; ++i) {
      forcing_(i + static_cast<Eigen::Index>(nx) * j) = f;
    }
  }
  poisson_ = std::make_shared<DirichletSolver2D>(
      nx, ny, 0.0, 1.0 / (dx() * dx()), 1.0 / (dy() * dy()));
}

Vector BVEModel::d_x(const Vector& f) const {
  Vector out(f.size());
  const double c = 0.5 * (nx_ + 1);
  for (int j = 0; j < ny_; ++j) {
    const Eigen::Index base = static_cast<Eigen::Index>(j) * nx_;
    for (int i = 0; i < nx_; ++i) {
      const double w = i > 0 ? f(base + i - 1) : 0.0;
      const double e = i + 1 < nx_ ? f(base + i + 1) : 0.0;
      out(base + i) = (e - w) * c;
    }
  }
  return out;
}

Vector BVEModel::d_y(const Vector& f) const {
  Vector out(f.size());
  const double c = 0.25 * (ny_ + 1);  // 1 / (2 dy) with dy = 2/(ny+1)
  for (int j = 0; j < ny_; ++j) {
    const Eigen::Index base = static_cast<Eigen::Index>(j) * nx_;
    for (int i = 0; i < nx_; ++i) {
      const double s = j > 0 ? f(base + i - nx_) : 0.0;
      const double n = j + 1 < ny_ ? f(base + i + nx_) : 0.0;
      out(base + i) = (n - s) * c;
    }
  }
  return out;
}

Vector BVEModel::laplacian(const Vector& f) const {
  return -neg_laplacian_2d(f, nx_, ny_, 1.0 / (dx() * dx()),
                           1.0 / (dy() * dy()));
}

Vector BVEModel::poisson_solve(const Vector& omega) const {
  return poisson_->solve(omega);
}

Vector BVEModel::rhs(const Vector& omega) const {
  const Vector psi = poisson_solve(omega);
  const Vector om_x = d_x(omega);
  const Vector om_y = d_y(omega);
  const Vector psi_x = d_x(psi);
  const Vector psi_y = d_y(psi);
  Vector out = -(psi_y.array() * om_x.array() -
                 psi_x.array() * om_y.array()).matrix();
  out += (1.0 / ro_) * (psi_x + forcing_);
  out += (1.0 / re_) * laplacian(omega);
  return out;
}

Vector BVEModel::step(const Vector& omega) const {
  const Vector o1 = omega + dt_ * rhs(omega);
  const Vector o2 = 0.75 * omega + 0.25 * (o1 + dt_ * rhs(o1));
  return omega / 3.0 + (2.0 / 3.0) * (o2 + dt_ * rhs(o2));
}

Vector BVEModel::forward(const Vector& x0, int steps) const {
  if (x0.size() != dim()) {
    throw std::invalid_argument("BVEModel::forward: size mismatch");
  }
  Vector u = x0;
  for (int k = 0; k < steps; ++k) {
    u = step(u);
    if (!u.allFinite()) {
      throw std::runtime_error(
          "BVEModel::forward: non-finite state at step " +
          std::to_string(k + 1) + " (time step too large for stability)");
    }
  }
  return u;
}

namespace {

// Frozen per-stage fields needed by the linearized advection terms.
struct StageFields {
  Vector om_x, om_y, psi_x, psi_y;
};

class BVETrajectory final : public LinearizedTrajectory {
 public:
  BVETrajectory(const BVEModel& model, const Vector& x0, int steps)
      : model_(model), steps_(steps) {
    states_.reserve(steps + 1);
    stages_.resize(steps);
    states_.push_back(x0);
    Vector u = x0;
    const double dt = model_.inner_dt();
    for (int k = 0; k < steps; ++k) {
      const Vector u1 = u + dt * tendency(u, stages_[k][0]);
      const Vector u2 = 0.75 * u + 0.25 * (u1 + dt * tendency(u1, stages_[k][1]));
      u = u / 3.0 + (2.0 / 3.0) * (u2 + dt * tendency(u2, stages_[k][2]));
      if (!u.allFinite()) {
        throw std::runtime_error(
            "BVEModel::linearize: non-finite state at step " +
            std::to_string(k + 1));
      }
      states_.push_back(u);
    }
  }

  int total_steps() const override { return steps_; }

  Vector state_at(int step) const override {
    if (step < 0 || step > steps_) {
      throw std::invalid_argument("BVETrajectory: step out of range");
    }
    return states_[step];
  }

  Vector tlm_range(int begin, int end, const Vector& dx) const override {
    check_range(begin, end);
    const double dt = model_.inner_dt();
    Vector d = dx;
    for (int k = begin; k < end; ++k) {
      const Vector d1 = d + dt * jac(stages_[k][0], d);
      const Vector d2 = 0.75 * d + 0.25 * (d1 + dt * jac(stages_[k][1], d1));
      d = d / 3.0 + (2.0 / 3.0) * (d2 + dt * jac(stages_[k][2], d2));
    }
    return d;
  }

  Vector adj_range(int begin, int end, const Vector& lambda) const override {
    check_range(begin, end);
    const double dt = model_.inner_dt();
    Vector lam = lambda;
    for (int k = end - 1; k >= begin; --k) {
      const Vector t2 =
          (2.0 / 3.0) * (lam + dt * jac_adj(stages_[k][2], lam));
      const Vector t1 = 0.25 * (t2 + dt * jac_adj(stages_[k][1], t2));
      lam = lam / 3.0 + 0.75 * t2 + t1 + dt * jac_adj(stages_[k][0], t1);
    }
    return lam;
  }

 private:
  void check_range(int begin, int end) const {
    if (begin < 0 || end > steps_ || begin > end) {
      throw std::invalid_argument("BVETrajectory: step range out of bounds");
    }
  }

  // Tendency that also records the frozen stage fields.
  Vector tendency(const Vector& omega, StageFields& f) const {
    const Vector psi = model_.poisson_solve(omega);
    f.om_x = model_.d_x(omega);
    f.om_y = model_.d_y(omega);
    f.psi_x = model_.d_x(psi);
    f.psi_y = model_.d_y(psi);
    Vector out = -(f.psi_y.array() * f.om_x.array() -
                   f.psi_x.array() * f.om_y.array()).matrix();
    out += (1.0 / model_.rossby()) * (f.psi_x + model_.forcing());
    out += (1.0 / model_.reynolds()) * model_.laplacian(omega);
    return out;
  }

  Vector jac(const StageFields& f, const Vector& d) const {
    const Vector dpsi = model_.poisson_solve(d);
    const Vector d_x = model_.d_x(d);
    const Vector d_y = model_.d_y(d);
    const Vector dpsi_x = model_.d_x(dpsi);
    const Vector dpsi_y = model_.d_y(dpsi);
    Vector out = -(dpsi_y.array() * f.om_x.array() +
                   f.psi_y.array() * d_x.array() -
                   dpsi_x.array() * f.om_y.array() -
                   f.psi_x.array() * d_y.array()).matrix();
    out += (1.0 / model_.rossby()) * dpsi_x;
    out += (1.0 / model_.reynolds()) * model_.laplacian(d);
    return out;
  }

  Vector jac_adj(const StageFields& f, const Vector& lam) const {
    // Transpose of jac: D_x^T = -D_x, D_y^T = -D_y, Lap and the Poisson
    // solve are self-adjoint.
    Vector out = model_.d_x((f.psi_y.array() * lam.array()).matrix());
    out -= model_.d_y((f.psi_x.array() * lam.array()).matrix());
    Vector via_psi =
        model_.d_y((f.om_x.array() * lam.array()).matrix()) -
        model_.d_x((f.om_y.array() * lam.array()).matrix()) -
        (1.0 / model_.rossby()) * model_.d_x(lam);
    out += model_.poisson_solve(via_psi);
    out += (1.0 / model_.reynolds()) * model_.laplacian(lam);
    return out;
  }

  const BVEModel model_;  // by value: trajectories may outlive the caller
  int steps_;
  std::vector<Vector> states_;
  std::vector<std::array<StageFields, 3>> stages_;
};

}  // namespace

std::shared_ptr<const LinearizedTrajectory> BVEModel::linearize(
    const Vector& x0, int steps, int /*checkpoint_stride*/) const {
  if (x0.size() != dim()) {
    throw std::invalid_argument("BVEModel::linearize: size mismatch");
  }
  return std::make_shared<BVETrajectory>(*this, x0, steps);
}

}  // namespace sketchdav
