#include "sketchdav/sketch.hpp"

#include "sketchdav/rng.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <iostream>
#include <limits>
#include <stdexcept>
#include <thread>

namespace sketchdav {

namespace {

constexpr std::uint64_t kPsiStream = 0x707369;
constexpr std::uint64_t kGrowStream = 0x67726f77;
constexpr std::uint64_t kProbeStream = 0x70726f6265;

void warn(const std::string& msg) {
  std::cerr << "[sketchdav] warning: " << msg << "\n";
}

/// EVD of G^T G from the thin SVD of the Gram factor G (l x n).
LowRankEVD evd_from_gram_factor(const Matrix& g) {
  const ThinSVD svd = thin_svd(g);
  LowRankEVD evd;
  evd.basis = svd.v;
  evd.eigenvalues = svd.s.array().square();
  return evd;
}

/// One block Gram-Schmidt pass of y against the orthonormal columns of q,
/// repeated once more if any column loses more than 1/sqrt(2) of its norm
/// (Kahan-Parlett criterion).
void orthogonalize_block(Matrix& y, const Matrix& q) {
  if (q.cols() == 0 || y.cols() == 0) {
    return;
  }
  const Vector pre = y.colwise().norm();
  y.noalias() -= q * (q.transpose() * y);
  const Vector post = y.colwise().norm();
  constexpr double kInvSqrt2 = 0.70710678118654752;
  for (Eigen::Index j = 0; j < y.cols(); ++j) {
    if (post(j) < kInvSqrt2 * pre(j)) {
      y.noalias() -= q * (q.transpose() * y);
      break;
    }
  }
}

Matrix append_columns(const Matrix& a, const Matrix& b) {
  Matrix out(a.rows(), a.cols() + b.cols());
  out.leftCols(a.cols()) = a;
  out.rightCols(b.cols()) = b;
  return out;
}

}  // namespace

std::string to_string(SketchMethod m) {
  switch (m) {
    case SketchMethod::RandSVD: return "RandSVD";
    case SketchMethod::Nystrom: return "Nystrom";
    case SketchMethod::SingleView: return "SingleView";
    case SketchMethod::Lanczos: return "Lanczos";
  }
  return "?";
}

SketchMethod sketch_method_from_string(const std::string& name) {
  if (name == "RandSVD" || name == "randsvd") return SketchMethod::RandSVD;
  if (name == "Nystrom" || name == "nystrom") return SketchMethod::Nystrom;
  if (name == "SingleView" || name == "singleview")
    return SketchMethod::SingleView;
  if (name == "Lanczos" || name == "lanczos") return SketchMethod::Lanczos;
  throw std::invalid_argument("unknown sketch method: " + name);
}

void SketchConfig::validate(Eigen::Index m, Eigen::Index n) const {
  const Eigen::Index cap = max_rank > 0 ? max_rank : std::min(m, n);
  if (rank < 1 || rank > cap) {
    throw std::invalid_argument("SketchConfig: need 1 <= rank <= max_rank");
  }
  if (cap > std::min(m, n)) {
    throw std::invalid_argument("SketchConfig: max_rank exceeds min(m, n)");
  }
  if (method == SketchMethod::SingleView && resolved_rank2() < rank) {
    throw std::invalid_argument("SketchConfig: need rank2 >= rank");
  }
  if (!(eps_sketch >= 1.0)) {
    throw std::invalid_argument("SketchConfig: need eps_sketch >= 1");
  }
  if (!(eps_reuse > eps_sketch)) {
    throw std::invalid_argument("SketchConfig: need eps_reuse > eps_sketch");
  }
  if (growth < 1) {
    throw std::invalid_argument("SketchConfig: need growth >= 1");
  }
}

std::uint64_t probe_seed(std::uint64_t seed, int pass) {
  return mix_seed(seed, kProbeStream + static_cast<std::uint64_t>(pass));
}

std::uint64_t growth_seed(std::uint64_t seed, int pass) {
  return mix_seed(seed, kGrowStream + static_cast<std::uint64_t>(pass));
}

std::uint64_t psi_seed(std::uint64_t seed) {
  return mix_seed(seed, kPsiStream);
}

Matrix apply_columns(const LinearMap& op, const Matrix& x, bool adjoint,
                     int workers) {
  const Eigen::Index out_rows = adjoint ? op.cols() : op.rows();
  Matrix out(out_rows, x.cols());
  auto run = [&](Eigen::Index begin, Eigen::Index stride) {
    for (Eigen::Index j = begin; j < x.cols(); j += stride) {
      out.col(j) = adjoint ? op.adjoint_apply(x.col(j)) : op.apply(x.col(j));
    }
  };
  if (workers <= 1 || x.cols() <= 1) {
    run(0, 1);
    return out;
  }
  const int nthreads = static_cast<int>(
      std::min<Eigen::Index>(workers, x.cols()));
  std::vector<std::thread> pool;
  pool.reserve(nthreads);
  for (int t = 0; t < nthreads; ++t) {
    pool.emplace_back(run, t, nthreads);
  }
  for (auto& th : pool) {
    th.join();
  }
  return out;
}

SketchReport randsvd_sketch(const LinearMap& a, int rank, std::uint64_t seed,
                            int workers) {
  const Eigen::Index m = a.rows();
  const Eigen::Index n = a.cols();
  if (rank < 1 || rank > std::min(m, n)) {
    throw std::invalid_argument("randsvd_sketch: need 1 <= rank <= min(m, n)");
  }
  const Matrix omega = gaussian_matrix(n, rank, seed);
  const Matrix y = apply_columns(a, omega, false, workers);
  const Matrix q = thin_qr(y).q;
  const Matrix wt = apply_columns(a, q, true, workers);  // n x l = A^T Q

  SketchReport report;
  report.evd = evd_from_gram_factor(wt.transpose());
  report.tlm_applies = rank;
  report.adj_applies = rank;
  report.final_rank = rank;
  return report;
}

LowRankEVD nystrom_assemble(const Matrix& omega, const Matrix& y) {
  const Eigen::Index n = y.rows();
  const double y_norm = spectral_norm(y);
  if (y_norm == 0.0) {
    // Zero operator: any orthonormal basis with zero eigenvalues.
    LowRankEVD evd;
    evd.basis = thin_qr(omega).q;
    evd.eigenvalues = Vector::Zero(omega.cols());
    return evd;
  }
  double nu = std::sqrt(static_cast<double>(n)) *
              std::numeric_limits<double>::epsilon() * y_norm;
  for (int attempt = 0; attempt < 2; ++attempt) {
    const Matrix y_shifted = y + nu * omega;
    const Matrix c = omega.transpose() * y_shifted;
    const Matrix c_sym = 0.5 * (c + c.transpose());
    Matrix lower;
    try {
      lower = cholesky_lower(c_sym);
    } catch (const std::runtime_error&) {
      if (attempt == 0) {
        nu *= 10.0;
        continue;
      }
      throw std::runtime_error(
          "nystrom_assemble: Cholesky failed even with a 10x shift; "
          "a larger stabilization shift is required");
    }
    const Matrix w = lower.triangularView<Eigen::Lower>().solve(
        Matrix(y_shifted.transpose()));
    const ThinSVD svd = thin_svd(w);
    LowRankEVD evd;
    evd.basis = svd.v;
    evd.eigenvalues =
        (svd.s.array().square() - nu).max(0.0).matrix();
    return evd;
  }
  throw std::logic_error("nystrom_assemble: unreachable");
}

SketchReport nystrom_sketch(const LinearMap& h, int rank, std::uint64_t seed,
                            int workers) {
  if (h.rows() != h.cols()) {
    throw std::invalid_argument("nystrom_sketch: operator must be square");
  }
  const Eigen::Index n = h.rows();
  if (rank < 1 || rank > n) {
    throw std::invalid_argument("nystrom_sketch: need 1 <= rank <= n");
  }
  const Matrix omega = gaussian_matrix(n, rank, seed);
  const Matrix y = apply_columns(h, omega, false, workers);

  SketchReport report;
  report.evd = nystrom_assemble(omega, y);
  report.tlm_applies = rank;  // one H-apply is one TLM plus one ADJ
  report.adj_applies = rank;
  report.final_rank = rank;
  return report;
}

namespace {

struct SingleViewState {
  Matrix psi;   // m x l2, fixed
  Matrix z;     // n x l2, fixed
  Matrix q_y;   // m x l1 accumulated range basis
  Matrix q_m;   // l2 x l1
  Matrix r_m;   // l1 x l1
};

LowRankEVD singleview_evd(const SingleViewState& st, Matrix* range_factor) {
  int truncated = 0;
  const Matrix r_pinv = pseudo_inverse(st.r_m, &truncated);
  if (truncated > 0) {
    warn("singleview: rank-deficient R_M, pseudoinverse truncated " +
         std::to_string(truncated) + " singular value(s)");
  }
  const Matrix w = r_pinv * (st.z * st.q_m).transpose();  // l1 x n
  const ThinSVD svd = thin_svd(w);
  if (range_factor != nullptr) {
    *range_factor = st.q_y * svd.u;
  }
  LowRankEVD evd;
  evd.basis = svd.v;
  evd.eigenvalues = svd.s.array().square();
  return evd;
}

SingleViewState singleview_init(const LinearMap& a, int rank1, int rank2,
                                std::uint64_t seed, int workers,
                                long* tlm, long* adj) {
  const Eigen::Index m = a.rows();
  const Eigen::Index n = a.cols();
  if (rank1 < 1 || rank1 > std::min(m, n)) {
    throw std::invalid_argument(
        "singleview_sketch: need 1 <= rank1 <= min(m, n)");
  }
  if (rank2 < rank1) {
    throw std::invalid_argument("singleview_sketch: need rank2 >= rank1");
  }
  SingleViewState st;
  const Matrix omega = gaussian_matrix(n, rank1, seed);
  st.psi = gaussian_matrix(m, rank2, psi_seed(seed));
  const Matrix y = apply_columns(a, omega, false, workers);
  st.z = apply_columns(a, st.psi, true, workers);
  *tlm += rank1;
  *adj += rank2;
  st.q_y = thin_qr(y).q;
  const ThinQR m_qr = thin_qr(st.psi.transpose() * st.q_y);
  st.q_m = m_qr.q;
  st.r_m = m_qr.r;
  return st;
}

}  // namespace

SketchReport singleview_sketch(const LinearMap& a, int rank1, int rank2,
                               std::uint64_t seed, int workers) {
  SketchReport report;
  SingleViewState st = singleview_init(a, rank1, rank2, seed, workers,
                                       &report.tlm_applies,
                                       &report.adj_applies);
  report.evd = singleview_evd(st, &report.range_factor);
  report.final_rank = rank1;
  return report;
}

namespace {

// Continuable Lanczos factorization with full reorthogonalization. After k
// steps alpha has k entries, beta has k entries when another vector is
// pending (the trailing beta couples v_{k-1} to the pending v_k) and k-1 on
// breakdown.
struct LanczosFactorization {
  Matrix v;  // n x (k or k+1)
  std::vector<double> alpha;
  std::vector<double> beta;
  int k = 0;
  bool exhausted = false;
  double scale = 0.0;
};

LanczosFactorization lanczos_start(const LinearMap& h, const Vector& start) {
  if (h.rows() != h.cols()) {
    throw std::invalid_argument("lanczos: operator must be square");
  }
  if (start.size() != h.rows() || start.norm() == 0.0) {
    throw std::invalid_argument("lanczos: start vector must be nonzero");
  }
  LanczosFactorization f;
  f.v = start / start.norm();
  return f;
}

void lanczos_extend(const LinearMap& h, LanczosFactorization& f, int target,
                    long* applies) {
  const Eigen::Index n = h.rows();
  target = std::min<int>(target, static_cast<int>(n));
  while (f.k < target && !f.exhausted) {
    const int k = f.k;
    Vector w = h.apply(f.v.col(k));
    ++*applies;
    const double a_k = f.v.col(k).dot(w);
    f.alpha.push_back(a_k);
    w -= a_k * f.v.col(k);
    if (k > 0) {
      w -= f.beta[k - 1] * f.v.col(k - 1);
    }
    // Full reorthogonalization against every Lanczos vector so far.
    {
      auto basis = f.v.leftCols(k + 1);
      const double pre = w.norm();
      w.noalias() -= basis * (basis.transpose() * w);
      if (w.norm() < 0.70710678118654752 * pre) {
        w.noalias() -= basis * (basis.transpose() * w);
      }
    }
    f.scale = std::max(f.scale, std::abs(a_k));
    const double b_k = w.norm();
    f.k = k + 1;
    if (b_k <= 1e3 * std::numeric_limits<double>::epsilon() *
                   std::max(f.scale, 1.0)) {
      f.exhausted = true;  // invariant subspace found
      break;
    }
    f.beta.push_back(b_k);
    f.scale = std::max(f.scale, b_k);
    f.v.conservativeResize(Eigen::NoChange, k + 2);
    f.v.col(k + 1) = w / b_k;
  }
}

/// Ritz pairs of the current tridiagonal matrix, nonincreasing, clamped at
/// zero (H is positive semidefinite up to roundoff).
LowRankEVD lanczos_ritz(const LanczosFactorization& f) {
  const int k = f.k;
  Matrix t = Matrix::Zero(k, k);
  for (int i = 0; i < k; ++i) {
    t(i, i) = f.alpha[i];
    if (i + 1 < k) {
      t(i, i + 1) = f.beta[i];
      t(i + 1, i) = f.beta[i];
    }
  }
  Eigen::SelfAdjointEigenSolver<Matrix> eig(t);
  LowRankEVD evd;
  evd.basis = Matrix(f.v.rows(), k);
  evd.eigenvalues = Vector(k);
  for (int i = 0; i < k; ++i) {
    evd.eigenvalues(i) = std::max(0.0, eig.eigenvalues()(k - 1 - i));
    evd.basis.col(i) =
        f.v.leftCols(k) * eig.eigenvectors().col(k - 1 - i);
  }
  return evd;
}

}  // namespace

SketchReport lanczos_sketch(const LinearMap& h, int rank,
                            const Vector& start) {
  LanczosFactorization f = lanczos_start(h, start);
  SketchReport report;
  lanczos_extend(h, f, rank, &report.tlm_applies);
  report.adj_applies = report.tlm_applies;
  report.evd = lanczos_ritz(f);
  report.final_rank = f.k;
  return report;
}

double cond_estimate(const LinearMap& h, const LowRankEVD& evd,
                     std::uint64_t seed) {
  if (h.rows() != h.cols() || h.rows() != evd.dim()) {
    throw std::invalid_argument("cond_estimate: dimension mismatch");
  }
  Vector v = gaussian_vector(h.cols(), seed);
  v /= v.norm();
  const Vector u = woodbury_apply(evd, v);
  return (u + h.apply(u)).norm();
}

SketchReport adaptive_randsvd(const LinearMap& a, const SketchConfig& cfg,
                              const LinearMap& h_probe) {
  const Eigen::Index m = a.rows();
  const Eigen::Index n = a.cols();
  cfg.validate(m, n);
  const int cap = cfg.max_rank > 0 ? cfg.max_rank
                                   : static_cast<int>(std::min(m, n));

  SketchReport report;
  int l = std::min(cfg.rank, cap);
  const Matrix omega = gaussian_matrix(n, l, cfg.seed);
  Matrix q = thin_qr(apply_columns(a, omega, false, cfg.workers)).q;
  Matrix wt = apply_columns(a, q, true, cfg.workers);  // n x l
  report.tlm_applies += l;
  report.adj_applies += l;

  for (int pass = 0;; ++pass) {
    report.evd = evd_from_gram_factor(wt.transpose());
    const double kappa = cond_estimate(h_probe, report.evd,
                                       probe_seed(cfg.seed, pass));
    ++report.probe_applies;
    report.kappa_history.push_back(kappa);
    if (kappa <= cfg.eps_sketch) {
      report.tolerance_met = true;
      break;
    }
    if (l >= cap) {
      report.tolerance_met = false;
      warn("adaptive_randsvd: max_rank " + std::to_string(cap) +
           " reached with kappa_sk = " + std::to_string(kappa));
      break;
    }
    const int lh = std::min(cfg.growth, cap - l);
    Matrix y_new = apply_columns(
        a, gaussian_matrix(n, lh, growth_seed(cfg.seed, pass)),
        false, cfg.workers);
    orthogonalize_block(y_new, q);
    const Matrix q_new = thin_qr(y_new).q;
    const Matrix wt_new = apply_columns(a, q_new, true, cfg.workers);
    report.tlm_applies += lh;
    report.adj_applies += lh;
    q = append_columns(q, q_new);
    wt = append_columns(wt, wt_new);
    l += lh;
  }
  report.final_rank = l;
  return report;
}

SketchReport adaptive_nystrom(const LinearMap& h, const SketchConfig& cfg,
                              const LinearMap* h_probe) {
  if (h.rows() != h.cols()) {
    throw std::invalid_argument("adaptive_nystrom: operator must be square");
  }
  const Eigen::Index n = h.rows();
  cfg.validate(n, n);
  const int cap = cfg.max_rank > 0 ? cfg.max_rank : static_cast<int>(n);
  const LinearMap& probe_op = h_probe != nullptr ? *h_probe : h;

  SketchReport report;
  int l = std::min(cfg.rank, cap);
  Matrix omega = gaussian_matrix(n, l, cfg.seed);
  Matrix y = apply_columns(h, omega, false, cfg.workers);
  report.tlm_applies += l;
  report.adj_applies += l;

  for (int pass = 0;; ++pass) {
    report.evd = nystrom_assemble(omega, y);
    const double kappa =
        cond_estimate(probe_op, report.evd, probe_seed(cfg.seed, pass));
    ++report.probe_applies;
    report.kappa_history.push_back(kappa);
    if (kappa <= cfg.eps_sketch) {
      report.tolerance_met = true;
      break;
    }
    if (l >= cap) {
      report.tolerance_met = false;
      warn("adaptive_nystrom: max_rank " + std::to_string(cap) +
           " reached with kappa_sk = " + std::to_string(kappa));
      break;
    }
    const int lh = std::min(cfg.growth, cap - l);
    const Matrix omega_new =
        gaussian_matrix(n, lh, growth_seed(cfg.seed, pass));
    const Matrix y_new = apply_columns(h, omega_new, false, cfg.workers);
    report.tlm_applies += lh;
    report.adj_applies += lh;
    omega = append_columns(omega, omega_new);
    y = append_columns(y, y_new);
    l += lh;
  }
  report.final_rank = l;
  return report;
}

SketchReport adaptive_singleview(const LinearMap& a, const SketchConfig& cfg,
                                 const LinearMap& h_probe) {
  const Eigen::Index m = a.rows();
  const Eigen::Index n = a.cols();
  cfg.validate(m, n);
  const int l2 = cfg.resolved_rank2();
  // The row sketch (Psi, Z) is fixed at its initial draw, so the range basis
  // cannot usefully exceed l2 columns.
  const int cap = std::min(
      cfg.max_rank > 0 ? cfg.max_rank : static_cast<int>(std::min(m, n)),
      l2);

  SketchReport report;
  int l1 = std::min(cfg.rank, cap);
  SingleViewState st =
      singleview_init(a, l1, l2, cfg.seed, cfg.workers,
                      &report.tlm_applies, &report.adj_applies);

  for (int pass = 0;; ++pass) {
    report.evd = singleview_evd(st, &report.range_factor);
    const double kappa =
        cond_estimate(h_probe, report.evd, probe_seed(cfg.seed, pass));
    ++report.probe_applies;
    report.kappa_history.push_back(kappa);
    if (kappa <= cfg.eps_sketch) {
      report.tolerance_met = true;
      break;
    }
    if (l1 >= cap) {
      report.tolerance_met = false;
      warn("adaptive_singleview: range rank limit " + std::to_string(cap) +
           " reached with kappa_sk = " + std::to_string(kappa));
      break;
    }
    const int lh = std::min(cfg.growth, cap - l1);
    Matrix y_new = apply_columns(
        a, gaussian_matrix(n, lh, growth_seed(cfg.seed, pass)),
        false, cfg.workers);
    report.tlm_applies += lh;
    orthogonalize_block(y_new, st.q_y);
    const Matrix q_y_new = thin_qr(y_new).q;

    // Column-append QR update of M = Psi^T [Q_Y  Q_Y_new]: with
    // P = Psi^T Q_Y_new, C = Q_M^T P and P - Q_M C = Q_P R_P, the factors
    // grow as Q_M <- [Q_M  Q_P], R_M <- [[R_M  C]; [0  R_P]].
    const Matrix p = st.psi.transpose() * q_y_new;
    Matrix c = st.q_m.transpose() * p;
    Matrix p_perp = p - st.q_m * c;
    {
      const Matrix c2 = st.q_m.transpose() * p_perp;
      p_perp -= st.q_m * c2;
      c += c2;
    }
    const ThinQR p_qr = thin_qr(p_perp);

    st.q_y = append_columns(st.q_y, q_y_new);
    st.q_m = append_columns(st.q_m, p_qr.q);
    Matrix r_new = Matrix::Zero(l1 + lh, l1 + lh);
    r_new.topLeftCorner(l1, l1) = st.r_m;
    r_new.topRightCorner(l1, lh) = c;
    r_new.bottomRightCorner(lh, lh) = p_qr.r;
    st.r_m = r_new;
    l1 += lh;
  }
  report.final_rank = l1;
  return report;
}

SketchReport adaptive_lanczos(const LinearMap& h, const SketchConfig& cfg,
                              const Vector& start, const LinearMap* h_probe) {
  if (h.rows() != h.cols()) {
    throw std::invalid_argument("adaptive_lanczos: operator must be square");
  }
  const Eigen::Index n = h.rows();
  cfg.validate(n, n);
  const int cap = cfg.max_rank > 0 ? cfg.max_rank : static_cast<int>(n);
  const LinearMap& probe_op = h_probe != nullptr ? *h_probe : h;

  SketchReport report;
  LanczosFactorization f = lanczos_start(h, start);
  lanczos_extend(h, f, std::min(cfg.rank, cap), &report.tlm_applies);

  for (int pass = 0;; ++pass) {
    report.evd = lanczos_ritz(f);
    const double kappa =
        cond_estimate(probe_op, report.evd, probe_seed(cfg.seed, pass));
    ++report.probe_applies;
    report.kappa_history.push_back(kappa);
    if (kappa <= cfg.eps_sketch) {
      report.tolerance_met = true;
      break;
    }
    if (f.k >= cap || f.exhausted) {
      report.tolerance_met = false;
      warn("adaptive_lanczos: rank limit reached with kappa_sk = " +
           std::to_string(kappa));
      break;
    }
    lanczos_extend(h, f, std::min(f.k + cfg.growth, cap),
                   &report.tlm_applies);
  }
  report.adj_applies = report.tlm_applies;
  report.final_rank = f.k;
  return report;
}

}  // namespace sketchdav
