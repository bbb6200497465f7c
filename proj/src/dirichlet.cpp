#include "sketchdav/dirichlet.hpp"

#include <cmath>
#include <mutex>
#include <numbers>
#include <stdexcept>

#ifdef SKETCHDAV_HAVE_FFTW
#include <fftw3.h>
#endif

namespace sketchdav {

double dirichlet_stencil_eigenvalue(int k, int n) {
  return 2.0 - 2.0 * std::cos(static_cast<double>(k) * std::numbers::pi /
                              static_cast<double>(n + 1));
}

Vector neg_laplacian_1d(const Vector& u) {
  const Eigen::Index n = u.size();
  Vector out(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double left = i > 0 ? u(i - 1) : 0.0;
    const double right = i + 1 < n ? u(i + 1) : 0.0;
    out(i) = 2.0 * u(i) - left - right;
  }
  return out;
}

Vector neg_laplacian_2d(const Vector& u, int nx, int ny, double sx, double sy) {
  if (u.size() != static_cast<Eigen::Index>(nx) * ny) {
    throw std::invalid_argument("neg_laplacian_2d: size mismatch");
  }
  Vector out(u.size());
  for (int j = 0; j < ny; ++j) {
    const int base = j * nx;
    for (int i = 0; i < nx; ++i) {
      const double c = u(base + i);
      const double w = i > 0 ? u(base + i - 1) : 0.0;
      const double e = i + 1 < nx ? u(base + i + 1) : 0.0;
      const double s = j > 0 ? u(base + i - nx) : 0.0;
      const double n_ = j + 1 < ny ? u(base + i + nx) : 0.0;
      out(base + i) = sx * (2.0 * c - w - e) + sy * (2.0 * c - s - n_);
    }
  }
  return out;
}

namespace {

#ifdef SKETCHDAV_HAVE_FFTW
// FFTW plan creation is not thread-safe; execution on distinct arrays is.
std::mutex& fftw_planner_mutex() {
  static std::mutex m;
  return m;
}
#endif

}  // namespace

struct DirichletSolver2D::Impl {
  int nx = 0;
  int ny = 0;
  Eigen::ArrayXXd inv_eigen;  // nx x ny reciprocal operator eigenvalues
#ifdef SKETCHDAV_HAVE_FFTW
  fftw_plan plan = nullptr;
#else
  Matrix sine_x;  // orthonormal DST-I matrices (symmetric)
  Matrix sine_y;
#endif

  ~Impl() {
#ifdef SKETCHDAV_HAVE_FFTW
    if (plan != nullptr) {
      std::lock_guard<std::mutex> lock(fftw_planner_mutex());
      fftw_destroy_plan(plan);
    }
#endif
  }
};

DirichletSolver2D::DirichletSolver2D(int nx, int ny, double a, double bx,
                                     double by)
    : impl_(std::make_unique<Impl>()) {
  impl_->nx = nx;
  impl_->ny = ny;
  impl_->inv_eigen.resize(nx, ny);
  for (int j = 0; j < ny; ++j) {
    const double mu_y = dirichlet_stencil_eigenvalue(j + 1, ny);
    for (int i = 0; i < nx; ++i) {
      const double mu_x = dirichlet_stencil_eigenvalue(i + 1, nx);
      const double lam = a + bx * mu_x + by * mu_y;
      if (!(lam > 0.0)) {
        throw std::invalid_argument(
            "DirichletSolver2D: operator is not positive definite");
      }
      impl_->inv_eigen(i, j) = 1.0 / lam;
    }
  }
#ifdef SKETCHDAV_HAVE_FFTW
  // Column-major (i + nx*j) storage is row-major (ny, nx) for FFTW.
  std::vector<double> buf(static_cast<size_t>(nx) * ny, 0.0);
  std::lock_guard<std::mutex> lock(fftw_planner_mutex());
  impl_->plan = fftw_plan_r2r_2d(ny, nx, buf.data(), buf.data(), FFTW_RODFT00,
                                 FFTW_RODFT00, FFTW_ESTIMATE | FFTW_UNALIGNED);
  if (impl_->plan == nullptr) {
    throw std::runtime_error("DirichletSolver2D: FFTW plan creation failed");
  }
#else
  auto sine_matrix = [](int n) {
    Matrix s(n, n);
    const double norm = std::sqrt(2.0 / (n + 1));
    for (int i = 0; i < n; ++i) {
      for (int k = 0; k < n; ++k) {
        s(i, k) = norm * std::sin((i + 1.0) * (k + 1.0) * std::numbers::pi /
                                  (n + 1));
      }
    }
    return s;
  };
  impl_->sine_x = sine_matrix(nx);
  impl_->sine_y = sine_matrix(ny);
#endif
}

DirichletSolver2D::~DirichletSolver2D() = default;
DirichletSolver2D::DirichletSolver2D(DirichletSolver2D&&) noexcept = default;
DirichletSolver2D& DirichletSolver2D::operator=(DirichletSolver2D&&) noexcept =
    default;

int DirichletSolver2D::nx() const { return impl_->nx; }
int DirichletSolver2D::ny() const { return impl_->ny; }

Vector DirichletSolver2D::solve(const Vector& rhs) const {
  const int nx = impl_->nx;
  const int ny = impl_->ny;
  if (rhs.size() != static_cast<Eigen::Index>(nx) * ny) {
    throw std::invalid_argument("DirichletSolver2D::solve: size mismatch");
  }
#ifdef SKETCHDAV_HAVE_FFTW
  Vector work = rhs;
  fftw_execute_r2r(impl_->plan, work.data(), work.data());
  Eigen::Map<Eigen::ArrayXXd>(work.data(), nx, ny) *= impl_->inv_eigen;
  fftw_execute_r2r(impl_->plan, work.data(), work.data());
  // RODFT00 applied twice scales by 2(n+1) per dimension.
  work /= 4.0 * (nx + 1.0) * (ny + 1.0);
  return work;
#else
  Eigen::Map<const Matrix> field(rhs.data(), nx, ny);
  Matrix hat = impl_->sine_x * field * impl_->sine_y;
  hat.array() *= impl_->inv_eigen;
  Matrix sol = impl_->sine_x * hat * impl_->sine_y;
  return Eigen::Map<Vector>(sol.data(), sol.size());
#endif
}

Tridiagonal1D::Tridiagonal1D(int n, double diag, double off)
    : n_(n), off_(off), pivot_(n) {
  if (n < 1) {
    throw std::invalid_argument("Tridiagonal1D: n must be >= 1");
  }
  double d = diag;
  for (int i = 0; i < n; ++i) {
    if (!(d > 0.0)) {
      throw std::runtime_error("Tridiagonal1D: factorization failed");
    }
    pivot_(i) = d;
    d = diag - off * off / d;
  }
}

Vector Tridiagonal1D::solve(const Vector& rhs) const {
  if (rhs.size() != n_) {
    throw std::invalid_argument("Tridiagonal1D::solve: size mismatch");
  }
  Vector y(n_);
  y(0) = rhs(0);
  for (int i = 1; i < n_; ++i) {
    y(i) = rhs(i) - off_ / pivot_(i - 1) * y(i - 1);
  }
  Vector x(n_);
  x(n_ - 1) = y(n_ - 1) / pivot_(n_ - 1);
  for (int i = n_ - 2; i >= 0; --i) {
    x(i) = (y(i) - off_ * x(i + 1)) / pivot_(i);
  }
  return x;
}

}  // namespace sketchdav
