#include "sketchdav/burgers.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <stdexcept>
#include <vector>

namespace sketchdav {

namespace {

// Centered first difference with zero boundary values, scaled by 1/(2 dx).
void d1(const Vector& u, double inv2dx, Vector& out) {
  const Eigen::Index n = u.size();
  for (Eigen::Index i = 0; i < n; ++i) {
    const double left = i > 0 ? u(i - 1) : 0.0;
    const double right = i + 1 < n ? u(i + 1) : 0.0;
    out(i) = (right - left) * inv2dx;
  }
}

// Second difference with zero boundary values, scaled by 1/dx^2.
void d2(const Vector& u, double invdx2, Vector& out) {
  const Eigen::Index n = u.size();
  for (Eigen::Index i = 0; i < n; ++i) {
    const double left = i > 0 ? u(i - 1) : 0.0;
    const double right = i + 1 < n ? u(i + 1) : 0.0;
    out(i) = (left - 2.0 * u(i) + right) * invdx2;
  }
}

struct Workspace {
  Vector a, b;
  explicit Workspace(Eigen::Index n) : a(n), b(n) {}
};

}  // namespace

BurgersModel::BurgersModel(int n, double nu, double dt)
    : n_(n), nu_(nu), dt_(dt) {
  if (n < 1 || nu < 0.0 || dt <= 0.0) {
    throw std::invalid_argument("BurgersModel: invalid parameters");
  }
  const double h = dx();
  const double advective = h;  // reference amplitude |u| = 1
  const double diffusive =
      nu > 0.0 ? h * h / (2.0 * nu) : advective;
  const double cfl = 0.9 * std::min(advective, diffusive);
  if (dt > cfl) {
    std::cerr << "[sketchdav] warning: BurgersModel dt = " << dt
              << " exceeds the CFL heuristic " << cfl << "\n";
  }
}

Vector BurgersModel::rhs(const Vector& u) const {
  Workspace w(n_);
  d1(u, 0.5 * (n_ + 1), w.a);
  d2(u, static_cast<double>(n_ + 1) * (n_ + 1), w.b);
  return (-u.array() * w.a.array() + nu_ * w.b.array()).matrix();
}

Vector BurgersModel::rhs_jacobian(const Vector& u, const Vector& d) const {
  Workspace w(n_);
  d1(u, 0.5 * (n_ + 1), w.a);   // D1 u
  Vector out = (-d.array() * w.a.array()).matrix();
  d1(d, 0.5 * (n_ + 1), w.a);   // D1 d
  out.array() -= u.array() * w.a.array();
  d2(d, static_cast<double>(n_ + 1) * (n_ + 1), w.b);
  out.array() += nu_ * w.b.array();
  return out;
}

Vector BurgersModel::rhs_jacobian_adjoint(const Vector& u,
                                          const Vector& lam) const {
  // Transpose of rhs_jacobian: D1^T = -D1 and D2^T = D2 with Dirichlet walls.
  Workspace w(n_);
  d1(u, 0.5 * (n_ + 1), w.a);   // D1 u
  Vector out = (-lam.array() * w.a.array()).matrix();
  w.b = (u.array() * lam.array()).matrix();
  d1(w.b, 0.5 * (n_ + 1), w.a); // D1 (u lam)
  out += w.a;
  d2(lam, static_cast<double>(n_ + 1) * (n_ + 1), w.b);
  out.array() += nu_ * w.b.array();
  return out;
}

Vector BurgersModel::step(const Vector& u) const {
  const Vector u1 = u + dt_ * rhs(u);
  const Vector u2 = 0.75 * u + 0.25 * (u1 + dt_ * rhs(u1));
  return u / 3.0 + (2.0 / 3.0) * (u2 + dt_ * rhs(u2));
}

Vector BurgersModel::forward(const Vector& x0, int steps) const {
  if (x0.size() != n_) {
    throw std::invalid_argument("BurgersModel::forward: size mismatch");
  }
  Vector u = x0;
  for (int k = 0; k < steps; ++k) {
    u = step(u);
    if (!u.allFinite()) {
      throw std::runtime_error(
          "BurgersModel::forward: non-finite state at step " +
          std::to_string(k + 1) + " (time step too large for stability)");
    }
  }
  return u;
}

namespace {

class BurgersTrajectory final : public LinearizedTrajectory {
 public:
  BurgersTrajectory(const BurgersModel& model, const Vector& x0, int steps,
                    int checkpoint_stride)
      : model_(model), steps_(steps) {
    const int n = model.n();
    // Per-call adjoint buffers hold 3 stage vectors per step; bound segments
    // so a segment buffer stays near 24 MB.
    const int budget = std::max(1, 1000000 / std::max(1, n));
    stride_ = std::max(1, std::min(checkpoint_stride, budget));
    block_ = std::max(1, checkpoint_stride);

    Vector u = x0;
    push_checkpoint(0, u);
    for (int k = 0; k < steps; ++k) {
      u = model_.step(u);
      if (!u.allFinite()) {
        throw std::runtime_error(
            "BurgersModel::linearize: non-finite state at step " +
            std::to_string(k + 1));
      }
      if ((k + 1) % block_ == 0 || ((k + 1) % block_) % stride_ == 0 ||
          k + 1 == steps) {
        push_checkpoint(k + 1, u);
      }
    }
  }

  int total_steps() const override { return steps_; }

  Vector state_at(int step) const override {
    check_range(step, step);
    const auto [cp_step, cp_state] = floor_checkpoint(step);
    Vector u = cp_state;
    for (int k = cp_step; k < step; ++k) {
      u = model_.step(u);
    }
    return u;
  }

  Vector tlm_range(int begin, int end, const Vector& dx) const override {
    check_range(begin, end);
    Vector u = state_at(begin);
    Vector d = dx;
    Vector u1(u.size()), u2(u.size());
    for (int k = begin; k < end; ++k) {
      stages(u, u1, u2);
      d = step_tlm(u, u1, u2, d);
      u = u / 3.0 + (2.0 / 3.0) * (u2 + model_.inner_dt() * model_.rhs(u2));
    }
    return d;
  }

  Vector adj_range(int begin, int end, const Vector& lambda) const override {
    check_range(begin, end);
    Vector lam = lambda;
    int cur = end;
    std::vector<Vector> u0s, u1s, u2s;
    while (cur > begin) {
      int seg_begin = std::max(begin, floor_checkpoint(cur - 1).first);
      Vector u = state_at(seg_begin);
      const int len = cur - seg_begin;
      u0s.assign(len, Vector());
      u1s.assign(len, Vector());
      u2s.assign(len, Vector());
      for (int k = 0; k < len; ++k) {
        u0s[k] = u;
        u1s[k].resize(u.size());
        u2s[k].resize(u.size());
        stages(u, u1s[k], u2s[k]);
        u = u / 3.0 +
            (2.0 / 3.0) * (u2s[k] + model_.inner_dt() * model_.rhs(u2s[k]));
      }
      for (int k = len - 1; k >= 0; --k) {
        lam = step_adj(u0s[k], u1s[k], u2s[k], lam);
      }
      cur = seg_begin;
    }
    return lam;
  }

 private:
  void check_range(int begin, int end) const {
    if (begin < 0 || end > steps_ || begin > end) {
      throw std::invalid_argument("BurgersTrajectory: step range out of bounds");
    }
  }

  void push_checkpoint(int step, const Vector& u) {
    checkpoints_.emplace_back(step, u);
  }

  std::pair<int, const Vector&> floor_checkpoint(int step) const {
    auto it = std::upper_bound(
        checkpoints_.begin(), checkpoints_.end(), step,
        [](int s, const auto& cp) { return s < cp.first; });
    --it;
    return {it->first, it->second};
  }

  void stages(const Vector& u, Vector& u1, Vector& u2) const {
    const double dt = model_.inner_dt();
    u1 = u + dt * model_.rhs(u);
    u2 = 0.75 * u + 0.25 * (u1 + dt * model_.rhs(u1));
  }

  Vector step_tlm(const Vector& u0, const Vector& u1, const Vector& u2,
                  const Vector& d) const {
    const double dt = model_.inner_dt();
    const Vector d1s = d + dt * model_.rhs_jacobian(u0, d);
    const Vector d2s =
        0.75 * d + 0.25 * (d1s + dt * model_.rhs_jacobian(u1, d1s));
    return d / 3.0 + (2.0 / 3.0) * (d2s + dt * model_.rhs_jacobian(u2, d2s));
  }

  Vector step_adj(const Vector& u0, const Vector& u1, const Vector& u2,
                  const Vector& lam) const {
    const double dt = model_.inner_dt();
    const Vector t2 =
        (2.0 / 3.0) * (lam + dt * model_.rhs_jacobian_adjoint(u2, lam));
    const Vector t1 =
        0.25 * (t2 + dt * model_.rhs_jacobian_adjoint(u1, t2));
    return lam / 3.0 + 0.75 * t2 + t1 +
           dt * model_.rhs_jacobian_adjoint(u0, t1);
  }

  const BurgersModel model_;  // by value: trajectories may outlive the caller
  int steps_;
  int stride_;
  int block_;
  std::vector<std::pair<int, Vector>> checkpoints_;
};

}  // namespace

std::shared_ptr<const LinearizedTrajectory> BurgersModel::linearize(
    const Vector& x0, int steps, int checkpoint_stride) const {
  if (x0.size() != n_) {
    throw std::invalid_argument("BurgersModel::linearize: size mismatch");
  }
  return std::make_shared<BurgersTrajectory>(*this, x0, steps,
                                             checkpoint_stride);
}

}  // namespace sketchdav
