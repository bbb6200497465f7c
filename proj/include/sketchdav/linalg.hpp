#pragma once

#include <Eigen/Core>

#include <functional>
#include <memory>
#include <vector>

namespace sketchdav {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Matrix-free linear operator. Implementations must be deterministic and
/// safe for concurrent read-only application; adjoint_apply must be the exact
/// transpose of apply (checked by dot tests, not at runtime).
class LinearMap {
 public:
  virtual ~LinearMap() = default;

  virtual Eigen::Index rows() const = 0;
  virtual Eigen::Index cols() const = 0;
  virtual Vector apply(const Vector& x) const = 0;
  virtual Vector adjoint_apply(const Vector& y) const = 0;
};

/// Dense operator, mostly for tests and desk-scale diagnostics.
class DenseMap final : public LinearMap {
 public:
  explicit DenseMap(Matrix a) : a_(std::move(a)) {}

  Eigen::Index rows() const override { return a_.rows(); }
  Eigen::Index cols() const override { return a_.cols(); }
  Vector apply(const Vector& x) const override { return a_ * x; }
  Vector adjoint_apply(const Vector& y) const override {
    return a_.transpose() * y;
  }
  const Matrix& matrix() const { return a_; }

 private:
  Matrix a_;
};

/// Operator defined by callables; adjoint defaults to apply (symmetric case).
class FunctionMap final : public LinearMap {
 public:
  using Fn = std::function<Vector(const Vector&)>;

  FunctionMap(Eigen::Index rows, Eigen::Index cols, Fn apply, Fn adjoint = {})
      : rows_(rows), cols_(cols), apply_(std::move(apply)),
        adjoint_(std::move(adjoint)) {}

  Eigen::Index rows() const override { return rows_; }
  Eigen::Index cols() const override { return cols_; }
  Vector apply(const Vector& x) const override { return apply_(x); }
  Vector adjoint_apply(const Vector& y) const override {
    return adjoint_ ? adjoint_(y) : apply_(y);
  }

 private:
  Eigen::Index rows_, cols_;
  Fn apply_, adjoint_;
};

/// H = A^T A for a rectangular map A; symmetric positive semidefinite.
class GramMap final : public LinearMap {
 public:
  explicit GramMap(const LinearMap& a) : a_(a) {}

  Eigen::Index rows() const override { return a_.cols(); }
  Eigen::Index cols() const override { return a_.cols(); }
  Vector apply(const Vector& x) const override {
    return a_.adjoint_apply(a_.apply(x));
  }
  Vector adjoint_apply(const Vector& y) const override { return apply(y); }

 private:
  const LinearMap& a_;
};

/// Counts applications of a wrapped operator. Thread-safe; used to account
/// TLM/ADJ budgets when operators are driven by sketching and PCG.
class CountingMap final : public LinearMap {
 public:
  explicit CountingMap(const LinearMap& inner) : inner_(inner) {}

  Eigen::Index rows() const override { return inner_.rows(); }
  Eigen::Index cols() const override { return inner_.cols(); }
  Vector apply(const Vector& x) const override;
  Vector adjoint_apply(const Vector& y) const override;

  long applies() const;
  long adjoint_applies() const;

 private:
  const LinearMap& inner_;
  mutable std::atomic<long> applies_{0};
  mutable std::atomic<long> adjoint_applies_{0};
};

/// Low-rank eigenvalue decomposition  H^ = basis * diag(eigenvalues) * basis^T
/// with orthonormal basis columns and nonnegative, nonincreasing eigenvalues.
struct LowRankEVD {
  Matrix basis;       // n x l
  Vector eigenvalues; // l

  Eigen::Index dim() const { return basis.rows(); }
  Eigen::Index rank() const { return basis.cols(); }

  static LowRankEVD zero(Eigen::Index n) {
    return LowRankEVD{Matrix::Zero(n, 0), Vector::Zero(0)};
  }
};

/// (I + V L V^T)^{-1} v  =  (I - V (L^{-1} + I)^{-1} V^T) v.  The diagonal
/// term (1/l + 1)^{-1} is evaluated as l / (1 + l) so zero eigenvalues
/// contribute nothing. Throws on dimension mismatch or non-finite input.
Vector woodbury_apply(const LowRankEVD& evd, const Vector& v);

struct PCGReport {
  Vector solution;
  int iterations = 0;
  std::vector<double> relative_residuals;
  bool converged = false;
};

using Preconditioner = std::function<Vector(const Vector&)>;

/// Preconditioned conjugate gradient (Hestenes-Stiefel recurrence, left
/// preconditioning z = M^{-1} r). Convergence is tested on the true relative
/// residual ||b - A x|| / ||b||. Zero initial guess. Throws if <r, z> <= 0,
/// which identifies an indefinite preconditioner.
PCGReport pcg_solve(const LinearMap& op, const Vector& rhs,
                    const Preconditioner& precond, double tol, int max_iter);

struct ThinQR {
  Matrix q;  // n x l, orthonormal columns
  Matrix r;  // l x l, upper triangular with nonnegative diagonal
  std::vector<Eigen::Index> deficient_columns;  // beyond numerical rank
};

/// Householder thin QR with the sign convention R(i,i) >= 0. Rank-deficient
/// inputs still factor; columns whose diagonal falls below
/// max(n,l)*eps*max_j |R(j,j)| are reported in deficient_columns.
ThinQR thin_qr(const Matrix& y);

struct ThinSVD {
  Matrix u;
  Vector s;  // nonincreasing
  Matrix v;
};

ThinSVD thin_svd(const Matrix& a);

/// Moore-Penrose inverse by SVD with singular values below
/// max(rows,cols)*eps*s_max truncated. truncated (if given) receives the
/// number of discarded singular values.
Matrix pseudo_inverse(const Matrix& a, int* truncated = nullptr);

/// Lower Cholesky factor of an SPD matrix; throws std::runtime_error when the
/// factorization fails.
Matrix cholesky_lower(const Matrix& spd);

/// Largest singular value (via thin SVD; intended for slim sketch matrices).
double spectral_norm(const Matrix& a);

}  // namespace sketchdav
