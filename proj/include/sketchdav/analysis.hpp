#pragma once

#include "sketchdav/linalg.hpp"

namespace sketchdav {

/// Spectrum diagnostics for a target rank r with oversampling p.
struct SpectrumReport {
  Vector eigenvalues;  // nonincreasing, nonnegative
  int r = 0;
  int p = 0;
  double id_r = 0.0;
  double psi = 0.0;
  double theta = 0.0;
};

/// id_r = sum_{j>r} lambda_j / lambda_{r+1}  (1-based indices; lambda must be
/// nonincreasing, lambda_{r+1} > 0).
double intrinsic_dimension(const Vector& lambda, int r);

/// Psi_H(r, p) = lambda_{r+1} + r/(p-1) * sum_{j>r} lambda_j.  Requires
/// p >= 2 (theorem hypothesis).
double psi_bound(const Vector& lambda, int r, int p);

/// Theta_H(r) = 3 (sum_{j>r} lambda_1 lambda_j)^{1/2} + 9/4 sum_{j>r} lambda_j.
double theta_bound(const Vector& lambda, int r);

SpectrumReport spectrum_report(const Vector& lambda, int r, int p);

/// Exact kappa_2 of (I + H^)^{-1/2} (I + H) (I + H^)^{-1/2} via dense
/// symmetric eigendecompositions. H must be SPD-compatible and H^ positive
/// semidefinite; intended for n <= 2000.
double split_precond_condition(const Matrix& h, const Matrix& h_hat);

/// Same quantity with the approximation in factored form; exploits
/// (I + V L V^T)^{+-1/2} = I + V ((1 + L)^{+-1/2} - 1) V^T to skip the dense
/// eigendecomposition of I + H^.
double split_precond_condition(const Matrix& h, const LowRankEVD& evd);

/// Synthetic diagonal spectra for the two ill-posedness regimes:
/// moderately ill-posed lambda_j = j^-alpha (alpha > 1), severely ill-posed
/// lambda_j = exp(-alpha j) (alpha > 0).
Vector moderately_illposed_spectrum(int n, double alpha);
Vector severely_illposed_spectrum(int n, double alpha);

}  // namespace sketchdav
