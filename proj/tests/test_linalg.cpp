#include "sketchdav/linalg.hpp"
#include "sketchdav/rng.hpp"

#include <doctest.h>

#include <Eigen/Eigenvalues>

#include <cmath>
#include <limits>

using namespace sketchdav;

namespace {

// Dense EVD of an SPD matrix as a LowRankEVD (oracle helper).
LowRankEVD exact_evd(const Matrix& h) {
  Eigen::SelfAdjointEigenSolver<Matrix> eig(h);
  LowRankEVD evd;
  evd.basis = eig.eigenvectors().rowwise().reverse();
  evd.eigenvalues = eig.eigenvalues().reverse().cwiseMax(0.0);
  return evd;
}

Matrix random_psd(int n, std::uint64_t seed) {
  const Matrix g = gaussian_matrix(n, n, seed);
  return g * g.transpose() / n;
}

}  // namespace

TEST_CASE("woodbury identity case: zero eigenvalues leave v untouched") {
  LowRankEVD evd;
  evd.basis = thin_qr(gaussian_matrix(12, 3, 1)).q;
  evd.eigenvalues = Vector::Zero(3);
  const Vector v = gaussian_vector(12, 2);
  CHECK((woodbury_apply(evd, v) - v).norm() == 0.0);
}

TEST_CASE("woodbury matches a dense inverse on a random PSD matrix") {
  const Matrix h = random_psd(6, 7);
  const LowRankEVD evd = exact_evd(h);
  const Vector v = gaussian_vector(6, 8);
  const Vector direct = (Matrix::Identity(6, 6) + h).ldlt().solve(v);
  CHECK((woodbury_apply(evd, v) - direct).norm() <= 1e-12 * direct.norm());
}

TEST_CASE("woodbury on a single unit eigenpair halves the eigendirection") {
  LowRankEVD evd;
  evd.basis = Matrix::Zero(5, 1);
  evd.basis(0, 0) = 1.0;
  evd.eigenvalues = Vector::Ones(1);
  Vector e1 = Vector::Zero(5);
  e1(0) = 1.0;
  CHECK((woodbury_apply(evd, e1) - 0.5 * e1).norm() <= 1e-15);
}

TEST_CASE("woodbury round trip: apply then multiply back") {
  for (int trial = 0; trial < 10; ++trial) {
    LowRankEVD evd;
    evd.basis = thin_qr(gaussian_matrix(30, 5, 100 + trial)).q;
    evd.eigenvalues = gaussian_vector(5, 200 + trial).cwiseAbs();
    std::sort(evd.eigenvalues.begin(), evd.eigenvalues.end(),
              std::greater<double>());
    const Vector v = gaussian_vector(30, 300 + trial);
    const Vector w = woodbury_apply(evd, v);
    const Vector back = w + evd.basis * (evd.eigenvalues.asDiagonal() *
                                         (evd.basis.transpose() * w));
    CHECK((back - v).norm() <= 1e-10 * v.norm());
  }
}

TEST_CASE("woodbury rejects bad input") {
  LowRankEVD evd;
  evd.basis = Matrix::Identity(4, 2);
  evd.eigenvalues = Vector::Ones(2);
  CHECK_THROWS_AS(woodbury_apply(evd, Vector::Ones(5)), std::invalid_argument);
  Vector v = Vector::Ones(4);
  v(1) = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(woodbury_apply(evd, v), std::invalid_argument);
}

TEST_CASE("pcg on the identity converges in one iteration") {
  const DenseMap op{Matrix::Identity(9, 9)};
  const PCGReport rep = pcg_solve(op, gaussian_vector(9, 4), nullptr, 1e-12, 10);
  CHECK(rep.converged);
  CHECK(rep.iterations == 1);
}

TEST_CASE("pcg matches a direct solve on diag(1..10)") {
  Vector d(10);
  for (int i = 0; i < 10; ++i) d(i) = i + 1.0;
  const DenseMap op{Matrix(d.asDiagonal())};
  const Vector rhs = Vector::Ones(10);
  const PCGReport rep = pcg_solve(op, rhs, nullptr, 1e-9, 50);
  CHECK(rep.converged);
  CHECK(rep.iterations <= 10);
  CHECK((rep.solution - rhs.cwiseQuotient(d)).norm() <= 1e-8);
  CHECK(rep.relative_residuals.back() <= 1e-9);
}

TEST_CASE("pcg with the exact inverse preconditioner needs one iteration") {
  const Matrix h = random_psd(15, 9) + Matrix::Identity(15, 15);
  const DenseMap op{h};
  const Matrix h_inv = h.inverse();
  const PCGReport rep = pcg_solve(
      op, gaussian_vector(15, 10),
      [&h_inv](const Vector& r) { return Vector(h_inv * r); }, 1e-10, 50);
  CHECK(rep.converged);
  CHECK(rep.iterations == 1);
}

TEST_CASE("pcg iteration count improves along the preconditioner ladder") {
  // diag spread over three decades; preconditioners: none, rank-half sketch
  // of the dominant part, exact inverse.
  const int n = 100;
  Vector d(n);
  for (int i = 0; i < n; ++i) {
    d(i) = std::pow(10.0, 3.0 * (n - 1 - i) / (n - 1));
  }
  const Matrix m = d.asDiagonal();
  const DenseMap op{m};
  const Vector rhs = gaussian_vector(n, 77);

  const PCGReport none = pcg_solve(op, rhs, nullptr, 1e-9, 1000);

  LowRankEVD half;
  half.basis = Matrix::Identity(n, n / 2);
  half.eigenvalues = d.head(n / 2).array() - 1.0;  // I + evd ~ diag on top half
  const PCGReport mid = pcg_solve(
      op, rhs, [&half](const Vector& r) { return woodbury_apply(half, r); },
      1e-9, 1000);

  const Matrix inv = m.inverse();
  const PCGReport exact = pcg_solve(
      op, rhs, [&inv](const Vector& r) { return Vector(inv * r); }, 1e-9,
      1000);

  CHECK(none.converged);
  CHECK(mid.converged);
  CHECK(exact.converged);
  CHECK(none.iterations >= mid.iterations);
  CHECK(mid.iterations >= exact.iterations);
  CHECK(exact.iterations == 1);
}

TEST_CASE("pcg identifies an indefinite preconditioner") {
  const DenseMap op{Matrix::Identity(6, 6)};
  CHECK_THROWS_WITH_AS(
      pcg_solve(op, Vector::Ones(6),
                [](const Vector& r) { return Vector(-r); }, 1e-9, 10),
      doctest::Contains("preconditioner"), std::runtime_error);
}

TEST_CASE("pcg on a zero right-hand side returns immediately") {
  const DenseMap op{Matrix::Identity(6, 6)};
  const PCGReport rep = pcg_solve(op, Vector::Zero(6), nullptr, 1e-9, 10);
  CHECK(rep.converged);
  CHECK(rep.iterations == 0);
  CHECK(rep.solution.norm() == 0.0);
}

TEST_CASE("thin QR of the identity is the identity") {
  const ThinQR qr = thin_qr(Matrix::Identity(5, 5));
  CHECK((qr.q - Matrix::Identity(5, 5)).norm() <= 1e-14);
  CHECK((qr.r - Matrix::Identity(5, 5)).norm() <= 1e-14);
  CHECK(qr.deficient_columns.empty());
}

TEST_CASE("thin QR reconstruction and orthonormality residuals") {
  const Matrix y = gaussian_matrix(20, 4, 13);
  const ThinQR qr = thin_qr(y);
  CHECK((qr.q * qr.r - y).norm() <= 1e-12 * y.norm());
  CHECK((qr.q.transpose() * qr.q - Matrix::Identity(4, 4)).norm() <= 1e-10);
}

TEST_CASE("thin QR flags duplicated columns") {
  Matrix y = gaussian_matrix(10, 3, 14);
  y.col(1) = y.col(0);
  const ThinQR qr = thin_qr(y);
  CHECK(std::abs(qr.r(1, 1)) <= 1e-12 * std::abs(qr.r(0, 0)));
  REQUIRE(!qr.deficient_columns.empty());
  CHECK(qr.deficient_columns.front() == 1);
}

TEST_CASE("thin QR of an orthonormal matrix has unit diagonal") {
  const Matrix q0 = thin_qr(gaussian_matrix(25, 6, 15)).q;
  const ThinQR qr = thin_qr(q0);
  for (int i = 0; i < 6; ++i) {
    CHECK(std::abs(std::abs(qr.r(i, i)) - 1.0) <= 1e-10);
  }
}

TEST_CASE("gaussian matrix moments over pooled samples") {
  const Matrix g = gaussian_matrix(10000, 10, 1234);
  const double mean = g.mean();
  const double var = (g.array() - mean).square().sum() / (g.size() - 1);
  CHECK(std::abs(mean) <= 0.05);
  CHECK(std::abs(var - 1.0) <= 0.05);
}

TEST_CASE("gaussian matrix is deterministic in the seed") {
  CHECK(gaussian_matrix(40, 3, 5) == gaussian_matrix(40, 3, 5));
  CHECK(gaussian_matrix(40, 3, 5) != gaussian_matrix(40, 3, 6));
}

TEST_CASE("pseudo inverse truncates below the numerical rank") {
  Matrix a = gaussian_matrix(8, 3, 21) * gaussian_matrix(3, 6, 22);
  int truncated = 0;
  const Matrix pinv = pseudo_inverse(a, &truncated);
  CHECK(truncated == 3);  // rank 3 of min dim 6
  CHECK((a * pinv * a - a).norm() <= 1e-10 * a.norm());
}

TEST_CASE("counting map tallies applies") {
  const DenseMap inner{Matrix::Identity(4, 4)};
  const CountingMap counted(inner);
  (void)counted.apply(Vector::Ones(4));
  (void)counted.apply(Vector::Ones(4));
  (void)counted.adjoint_apply(Vector::Ones(4));
  CHECK(counted.applies() == 2);
  CHECK(counted.adjoint_applies() == 1);
}
