#pragma once

#include <Eigen/Dense>
#include <span>
#include <vector>

#include "ffmagic/errors.hpp"

namespace ffmagic {

using Matrix = Eigen::MatrixXd;
using CMatrix = Eigen::MatrixXcd;

/// Numeric guard rails. Values are the defaults quoted in the module
/// contracts; harness configs may override the global instance.
struct NumericTolerances {
  double antisymmetry = 1e-12;        // accepted asymmetry before symmetrization
  double orthonormality = 1e-10;      // ||alpha alpha^dag - I/2||_max invariant
  double orthonormality_check = 1e-8; // precondition check threshold
  double pivot_rel = 1e-14;           // LU pivot cutoff, relative to max |entry|
  double rank_condition = 1e12;       // |R_ii| spread treated as rank loss
  double probability_slack = 1e-9;    // admissible overshoot of [0,1]
  double det_negative = 1e-10;        // clamp window for tiny negative dets
  double sampler_branch = 1e-12;      // conditional below this forces refactorization
  double sampler_pivot = 1e-6;        // rank-one update pivot floor; below it rebuild
  double sampler_drift = 1e-6;        // chain-rule vs fresh determinant mismatch
};

NumericTolerances& num_tol();

/// Real antisymmetric matrix. Construction symmetrizes (m - m^T)/2, so the
/// stored matrix is exactly antisymmetric; input asymmetry beyond the
/// tolerance is rejected as a usage error rather than silently absorbed.
class SkewMatrix {
 public:
  SkewMatrix() : m_(0, 0) {}
  explicit SkewMatrix(const Matrix& m);

  int dim() const { return static_cast<int>(m_.rows()); }
  const Matrix& mat() const { return m_; }
  double operator()(int i, int j) const { return m_(i, j); }

 private:
  Matrix m_;
};

struct SignedLogDet {
  int sign = 0;              // -1, 0, +1
  double log_magnitude = 0;  // -inf when sign == 0
  double value() const;
};

/// det via LU with partial pivoting, returned as sign and log-magnitude so
/// ratios of large determinants never overflow.
SignedLogDet signed_logdet(const Matrix& m);

/// Pfaffian via Parlett-Reid tridiagonalization with partial pivoting.
/// Odd dimension gives 0; the empty matrix gives 1.
double pfaffian(const SkewMatrix& m);

/// Rows/columns `indices` of m, in the given order. Indices must be
/// strictly increasing and in range.
SkewMatrix principal_minor(const SkewMatrix& m, std::span<const int> indices);

Matrix submatrix(const Matrix& m, std::span<const int> rows, std::span<const int> cols);

/// exp(h) for real antisymmetric h, computed through the Hermitian
/// eigendecomposition of i*h. The result is special orthogonal.
Matrix exp_skew(const SkewMatrix& h);

/// Restores row orthonormality alpha alpha^dag = I/2 via Householder QR of
/// alpha^dag with a phase fix on the R diagonal, so already-orthonormal input
/// comes back unchanged to machine precision. Throws DegeneracyError when the
/// rows are (numerically) linearly dependent.
CMatrix orthonormalize(const CMatrix& alpha);

/// Majorana covariance Gamma_{mu nu} = -(i/2) <[gamma_mu, gamma_nu]> of the
/// pure Gaussian state annihilated by the rows of alpha:
/// Gamma = 4 Im(alpha^dag alpha). Requires orthonormal alpha.
SkewMatrix covariance_from_alpha(const CMatrix& alpha);

}  // namespace ffmagic
