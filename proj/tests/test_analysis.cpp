#include "sketchdav/analysis.hpp"

#include "sketchdav/rng.hpp"
#include "sketchdav/linalg.hpp"

#include <doctest.h>

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <numbers>

using namespace sketchdav;

namespace {

constexpr double kZeta2 = 1.6449340668482264;  // pi^2 / 6

double zeta(double alpha, long terms = 2000000) {
  double s = 0.0;
  for (long j = terms; j >= 1; --j) {
    s += std::pow(static_cast<double>(j), -alpha);
  }
  return s;
}

}  // namespace

TEST_CASE("intrinsic dimension of a flat spectrum counts the tail") {
  Vector lam(3);
  lam << 1.0, 1.0, 1.0;
  CHECK(intrinsic_dimension(lam, 1) == 2.0);
}

TEST_CASE("intrinsic dimension of a severely ill-posed tail is bounded by "
          "1/(1 - e^-alpha)") {
  const double alpha = 1.0;
  const Vector lam = severely_illposed_spectrum(5000, alpha);
  const double bound = 1.0 / (1.0 - std::exp(-alpha));
  for (const int r : {0, 4, 40}) {
    const double id = intrinsic_dimension(lam, r);
    CHECK(id <= bound);
    CHECK(id >= bound - 1e-6);  // long tail: essentially tight
  }
}

TEST_CASE("intrinsic dimension under polynomial decay approaches zeta(alpha) "
          "at r = 0") {
  // The zeta bound applies to the leading tail; direct summation gives the
  // exact value, which exceeds zeta(alpha) for r > 0.
  const Vector lam = moderately_illposed_spectrum(1000000, 2.0);
  const double id0 = intrinsic_dimension(lam, 0);
  CHECK(id0 <= kZeta2);
  CHECK(id0 >= kZeta2 - 1e-4);
  const double id4 = intrinsic_dimension(lam, 4);
  CHECK(id4 > kZeta2);  // grows with r for polynomial decay
  // Exact value by independent summation over j > r, i.e. j >= 5.
  double tail = 0.0;
  for (long j = 1000000; j >= 5; --j) tail += 1.0 / (static_cast<double>(j) * j);
  CHECK(std::abs(id4 - tail * 25.0) <= 1e-6 * id4);
}

TEST_CASE("intrinsic dimension rejects a rank-deficient tail") {
  Vector lam(3);
  lam << 1.0, 0.5, 0.0;
  CHECK_THROWS_AS(intrinsic_dimension(lam, 2), std::invalid_argument);
}

TEST_CASE("psi bound hand-computed value and edge cases") {
  Vector lam(4);
  lam << 4.0, 1.0, 0.25, 0.0625;
  CHECK(psi_bound(lam, 2, 2) == doctest::Approx(0.875).epsilon(1e-15));

  Vector exact(5);
  exact << 3.0, 2.0, 1.0, 0.0, 0.0;
  CHECK(psi_bound(exact, 3, 2) == 0.0);

  CHECK_THROWS_AS(psi_bound(lam, 2, 1), std::invalid_argument);
}

TEST_CASE("psi bound is nonincreasing in the oversampling p") {
  const Vector lam = severely_illposed_spectrum(50, 0.5);
  double prev = psi_bound(lam, 6, 2);
  for (int p = 3; p <= 12; ++p) {
    const double cur = psi_bound(lam, 6, p);
    CHECK(cur <= prev + 1e-15);
    prev = cur;
  }
}

TEST_CASE("theta bound hand-computed value and zero tail") {
  Vector lam(2);
  lam << 1.0, 0.01;
  CHECK(theta_bound(lam, 1) == doctest::Approx(0.3225).epsilon(1e-15));

  Vector exact(4);
  exact << 2.0, 1.0, 0.0, 0.0;
  CHECK(theta_bound(exact, 2) == 0.0);
}

TEST_CASE("theta dominates psi at p = r + 1 for sorted spectra") {
  for (int trial = 0; trial < 50; ++trial) {
    Vector lam = gaussian_vector(12, 400 + trial).cwiseAbs();
    std::sort(lam.begin(), lam.end(), std::greater<double>());
    const int r = 3;
    if (lam(r) <= 0.0) continue;
    CHECK(theta_bound(lam, r) >= psi_bound(lam, r, r + 1) - 1e-14);
  }
}

TEST_CASE("split preconditioned condition number of an exact approximation "
          "is one") {
  const Matrix g = gaussian_matrix(10, 10, 17);
  const Matrix h = g * g.transpose() / 10.0;
  CHECK(split_precond_condition(h, h) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("split preconditioned condition number with a zero approximation") {
  Vector d(6);
  d << 5, 4, 3, 2, 1, 0.5;
  const Matrix h = d.asDiagonal();
  const double expect = (1.0 + 5.0) / (1.0 + 0.5);
  CHECK(split_precond_condition(h, Matrix::Zero(6, 6)) ==
        doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("factored and dense split condition numbers agree") {
  const Matrix g = gaussian_matrix(30, 30, 19);
  const Matrix h = g * g.transpose() / 30.0;
  Eigen::SelfAdjointEigenSolver<Matrix> eig(h);
  LowRankEVD evd;
  evd.basis = eig.eigenvectors().rightCols(6).rowwise().reverse();
  evd.eigenvalues = eig.eigenvalues().tail(6).reverse().cwiseMax(0.0);
  const Matrix h_hat =
      evd.basis * evd.eigenvalues.asDiagonal() * evd.basis.transpose();
  CHECK(split_precond_condition(h, evd) ==
        doctest::Approx(split_precond_condition(h, h_hat)).epsilon(1e-10));
}

TEST_CASE("split preconditioned condition number rejects an indefinite "
          "approximation") {
  const Matrix h = Matrix::Identity(4, 4);
  Matrix bad = Matrix::Zero(4, 4);
  bad(0, 0) = -0.5;
  CHECK_THROWS_AS(split_precond_condition(h, bad), std::invalid_argument);
}

TEST_CASE("structural condition bounds hold on random instances") {
  for (int trial = 0; trial < 20; ++trial) {
    const Matrix g = gaussian_matrix(15, 15, 600 + trial);
    const Matrix h = g * g.transpose() / 15.0;
    // Truncated eigendecomposition as the approximation: E is PSD.
    Eigen::SelfAdjointEigenSolver<Matrix> eig(h);
    const int keep = 5;
    Matrix basis = eig.eigenvectors().rightCols(keep);
    Vector vals = eig.eigenvalues().tail(keep).cwiseMax(0.0);
    const Matrix h_hat = basis * vals.asDiagonal() * basis.transpose();
    const double err = spectral_norm(h - h_hat);
    const double kappa = split_precond_condition(h, h_hat);
    CHECK(kappa <= 1.0 + err + 1e-10);
    CHECK(kappa <= (1.0 + err) * (1.0 + err) + 1e-10);
  }
}

TEST_CASE("intrinsic dimension curves track their closed-form bounds") {
  // Tail length 1024 for both regimes, as in the reference comparison.
  const int n = 1024;
  for (double alpha : {1.5, 2.0, 2.5, 3.0}) {
    const double id = intrinsic_dimension(moderately_illposed_spectrum(n, alpha), 0);
    const double bound = zeta(alpha);
    CHECK(id <= bound);
    CHECK(bound / id <= 1.05);
  }
  for (double alpha : {0.25, 0.5, 1.0, 2.0}) {
    const double id =
        intrinsic_dimension(severely_illposed_spectrum(n, alpha), 0);
    const double bound = 1.0 / (1.0 - std::exp(-alpha));
    CHECK(id <= bound);
    CHECK(bound / id <= 1.0 + 1e-6);
  }
}

TEST_CASE("spectrum report aggregates the diagnostics") {
  const Vector lam = severely_illposed_spectrum(100, 1.0);
  const SpectrumReport rep = spectrum_report(lam, 10, 5);
  CHECK(rep.id_r == intrinsic_dimension(lam, 10));
  CHECK(rep.psi == psi_bound(lam, 10, 5));
  CHECK(rep.theta == theta_bound(lam, 10));
  CHECK(rep.id_r >= 1.0);
  CHECK(rep.psi >= lam(10));
}
