#include "sketchdav/analysis.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>
#include <stdexcept>

namespace sketchdav {

namespace {

void check_spectrum(const Vector& lambda, int r) {
  if (r < 0 || r + 1 > lambda.size()) {
    throw std::invalid_argument("spectrum bound: need 0 <= r < size");
  }
  for (Eigen::Index i = 0; i + 1 < lambda.size(); ++i) {
    if (lambda(i) < lambda(i + 1)) {
      throw std::invalid_argument("spectrum bound: eigenvalues must be "
                                  "nonincreasing");
    }
  }
  if (lambda(lambda.size() - 1) < 0.0) {
    throw std::invalid_argument("spectrum bound: eigenvalues must be "
                                "nonnegative");
  }
}

double tail_sum(const Vector& lambda, int r) {
  return lambda.tail(lambda.size() - r).sum();
}

}  // namespace

double intrinsic_dimension(const Vector& lambda, int r) {
  check_spectrum(lambda, r);
  if (!(lambda(r) > 0.0)) {
    throw std::invalid_argument(
        "intrinsic_dimension: lambda_{r+1} = 0, tail is rank deficient");
  }
  return tail_sum(lambda, r) / lambda(r);
}

double psi_bound(const Vector& lambda, int r, int p) {
  check_spectrum(lambda, r);
  if (p < 2) {
    throw std::invalid_argument("psi_bound: theorem requires p >= 2");
  }
  return lambda(r) +
         static_cast<double>(r) / (p - 1) * tail_sum(lambda, r);
}

double theta_bound(const Vector& lambda, int r) {
  check_spectrum(lambda, r);
  const double tail = tail_sum(lambda, r);
  return 3.0 * std::sqrt(lambda(0) * tail) + 2.25 * tail;
}

SpectrumReport spectrum_report(const Vector& lambda, int r, int p) {
  SpectrumReport rep;
  rep.eigenvalues = lambda;
  rep.r = r;
  rep.p = p;
  rep.id_r = intrinsic_dimension(lambda, r);
  rep.psi = psi_bound(lambda, r, p);
  rep.theta = theta_bound(lambda, r);
  return rep;
}

double split_precond_condition(const Matrix& h, const Matrix& h_hat) {
  const Eigen::Index n = h.rows();
  if (h.cols() != n || h_hat.rows() != n || h_hat.cols() != n) {
    throw std::invalid_argument("split_precond_condition: dimension mismatch");
  }
  Eigen::SelfAdjointEigenSolver<Matrix> hat_eig(
      Matrix::Identity(n, n) + 0.5 * (h_hat + h_hat.transpose()));
  // 1e-8 absolute slack on top of the +1 shift absorbs roundoff in sketches
  // that are PSD by construction.
  if (hat_eig.eigenvalues().minCoeff() < 1.0 - 1e-8) {
    throw std::invalid_argument(
        "split_precond_condition: approximation is not positive semidefinite");
  }
  const Vector inv_sqrt = hat_eig.eigenvalues().cwiseMax(1.0).cwiseSqrt()
                              .cwiseInverse();
  const Matrix s = hat_eig.eigenvectors() * inv_sqrt.asDiagonal() *
                   hat_eig.eigenvectors().transpose();
  const Matrix middle = s * (Matrix::Identity(n, n) + h) * s;
  Eigen::SelfAdjointEigenSolver<Matrix> eig(
      0.5 * (middle + middle.transpose()));
  return eig.eigenvalues().maxCoeff() / eig.eigenvalues().minCoeff();
}

double split_precond_condition(const Matrix& h, const LowRankEVD& evd) {
  const Eigen::Index n = h.rows();
  if (h.cols() != n || evd.dim() != n) {
    throw std::invalid_argument("split_precond_condition: dimension mismatch");
  }
  if (evd.rank() > 0 && evd.eigenvalues.minCoeff() < -1e-12) {
    throw std::invalid_argument(
        "split_precond_condition: approximation is not positive semidefinite");
  }
  Matrix middle = Matrix::Identity(n, n) + h;
  if (evd.rank() > 0) {
    const Vector d = (1.0 + evd.eigenvalues.array()).rsqrt() - 1.0;
    const Matrix c = middle * evd.basis;              // (I + H) V
    const Matrix vc = evd.basis.transpose() * c;      // V^T (I + H) V
    middle += evd.basis * d.asDiagonal() * c.transpose();
    middle += c * d.asDiagonal() * evd.basis.transpose();
    middle += evd.basis * d.asDiagonal() * vc * d.asDiagonal() *
              evd.basis.transpose();
  }
  Eigen::SelfAdjointEigenSolver<Matrix> eig(
      0.5 * (middle + middle.transpose()), Eigen::EigenvaluesOnly);
  return eig.eigenvalues().maxCoeff() / eig.eigenvalues().minCoeff();
}

Vector moderately_illposed_spectrum(int n, double alpha) {
  if (!(alpha > 1.0)) {
    throw std::invalid_argument(
        "moderately_illposed_spectrum: need alpha > 1 (summable tail)");
  }
  Vector lambda(n);
  for (int j = 0; j < n; ++j) {
    lambda(j) = std::pow(static_cast<double>(j + 1), -alpha);
  }
  return lambda;
}

Vector severely_illposed_spectrum(int n, double alpha) {
  if (!(alpha > 0.0)) {
    throw std::invalid_argument("severely_illposed_spectrum: need alpha > 0");
  }
  Vector lambda(n);
  for (int j = 0; j < n; ++j) {
    lambda(j) = std::exp(-alpha * (j + 1));
  }
  return lambda;
}

}  // namespace sketchdav
