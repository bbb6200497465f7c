#include "sketchdav/linalg.hpp"

#include <Eigen/Cholesky>
#include <Eigen/QR>
#include <Eigen/SVD>

#include <atomic>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace sketchdav {

Vector CountingMap::apply(const Vector& x) const {
  applies_.fetch_add(1, std::memory_order_relaxed);
  return inner_.apply(x);
}

Vector CountingMap::adjoint_apply(const Vector& y) const {
  adjoint_applies_.fetch_add(1, std::memory_order_relaxed);
  return inner_.adjoint_apply(y);
}

long CountingMap::applies() const {
  return applies_.load(std::memory_order_relaxed);
}

long CountingMap::adjoint_applies() const {
  return adjoint_applies_.load(std::memory_order_relaxed);
}

Vector woodbury_apply(const LowRankEVD& evd, const Vector& v) {
  if (evd.basis.rows() != v.size()) {
    throw std::invalid_argument("woodbury_apply: dimension mismatch");
  }
  if (evd.basis.cols() != evd.eigenvalues.size()) {
    throw std::invalid_argument("woodbury_apply: basis/eigenvalue mismatch");
  }
  if (!v.allFinite() || !evd.eigenvalues.allFinite() ||
      !evd.basis.allFinite()) {
    throw std::invalid_argument("woodbury_apply: non-finite input");
  }
  if (evd.rank() == 0) {
    return v;
  }
  Vector coeff = evd.basis.transpose() * v;
  // (1/lambda + 1)^{-1} = lambda / (1 + lambda); zero eigenvalues drop out.
  coeff.array() *= evd.eigenvalues.array() / (1.0 + evd.eigenvalues.array());
  return v - evd.basis * coeff;
}

PCGReport pcg_solve(const LinearMap& op, const Vector& rhs,
                    const Preconditioner& precond, double tol, int max_iter) {
  if (op.rows() != op.cols() || op.rows() != rhs.size()) {
    throw std::invalid_argument("pcg_solve: dimension mismatch");
  }
  if (!(tol > 0.0)) {
    throw std::invalid_argument("pcg_solve: tolerance must be positive");
  }

  PCGReport report;
  const double rhs_norm = rhs.norm();
  report.solution = Vector::Zero(rhs.size());
  if (rhs_norm == 0.0) {
    report.converged = true;
    return report;
  }

  Vector r = rhs;
  Vector z = precond ? precond(r) : r;
  double rz = r.dot(z);
  if (rz <= 0.0) {
    throw std::runtime_error(
        "pcg_solve: preconditioner is not positive definite (<r, M^-1 r> <= 0)");
  }
  Vector p = z;

  for (int k = 1; k <= max_iter; ++k) {
    const Vector q = op.apply(p);
    const double pq = p.dot(q);
    if (pq <= 0.0) {
      throw std::runtime_error(
          "pcg_solve: operator is not positive definite (<p, A p> <= 0)");
    }
    const double alpha = rz / pq;
    report.solution += alpha * p;
    r -= alpha * q;
    const double relres = r.norm() / rhs_norm;
    report.relative_residuals.push_back(relres);
    report.iterations = k;
    if (relres <= tol) {
      report.converged = true;
      return report;
    }
    z = precond ? precond(r) : r;
    const double rz_next = r.dot(z);
    if (rz_next <= 0.0) {
      throw std::runtime_error(
          "pcg_solve: preconditioner is not positive definite "
          "(<r, M^-1 r> <= 0)");
    }
    p = z + (rz_next / rz) * p;
    rz = rz_next;
  }
  return report;
}

ThinQR thin_qr(const Matrix& y) {
  const Eigen::Index n = y.rows();
  const Eigen::Index l = y.cols();
  if (n < l) {
    throw std::invalid_argument("thin_qr: need rows >= cols");
  }
  Eigen::HouseholderQR<Matrix> qr(y);
  ThinQR out;
  out.q = qr.householderQ() * Matrix::Identity(n, l);
  out.r = qr.matrixQR().topRows(l).triangularView<Eigen::Upper>();
  // Fix the sign convention so the factorization is unique for full rank.
  for (Eigen::Index i = 0; i < l; ++i) {
    if (out.r(i, i) < 0.0) {
      out.r.row(i) *= -1.0;
      out.q.col(i) *= -1.0;
    }
  }
  const double dmax = out.r.diagonal().cwiseAbs().maxCoeff();
  const double tol = static_cast<double>(std::max(n, l)) *
                     std::numeric_limits<double>::epsilon() * dmax;
  for (Eigen::Index i = 0; i < l; ++i) {
    if (std::abs(out.r(i, i)) <= tol) {
      out.deficient_columns.push_back(i);
    }
  }
  return out;
}

ThinSVD thin_svd(const Matrix& a) {
  Eigen::BDCSVD<Matrix> svd(a, Eigen::ComputeThinU | Eigen::ComputeThinV);
  return ThinSVD{svd.matrixU(), svd.singularValues(), svd.matrixV()};
}

Matrix pseudo_inverse(const Matrix& a, int* truncated) {
  const ThinSVD svd = thin_svd(a);
  const double smax = svd.s.size() > 0 ? svd.s(0) : 0.0;
  const double tol = static_cast<double>(std::max(a.rows(), a.cols())) *
                     std::numeric_limits<double>::epsilon() * smax;
  Vector inv = Vector::Zero(svd.s.size());
  int dropped = 0;
  for (Eigen::Index i = 0; i < svd.s.size(); ++i) {
    if (svd.s(i) > tol) {
      inv(i) = 1.0 / svd.s(i);
    } else {
      ++dropped;
    }
  }
  if (truncated != nullptr) {
    *truncated = dropped;
  }
  return svd.v * inv.asDiagonal() * svd.u.transpose();
}

Matrix cholesky_lower(const Matrix& spd) {
  Eigen::LLT<Matrix> llt(spd);
  if (llt.info() != Eigen::Success) {
    throw std::runtime_error("cholesky_lower: matrix is not positive definite");
  }
  return llt.matrixL();
}

double spectral_norm(const Matrix& a) {
  if (a.size() == 0) {
    return 0.0;
  }
  Eigen::BDCSVD<Matrix> svd(a);
  return svd.singularValues()(0);
}

}  // namespace sketchdav
