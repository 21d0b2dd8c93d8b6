#include "ffmagic/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <sstream>

namespace ffmagic {

NumericTolerances& num_tol() {
  static NumericTolerances t;
  return t;
}

SkewMatrix::SkewMatrix(const Matrix& m) {
  if (m.rows() != m.cols()) throw InputError("SkewMatrix: matrix must be square");
  if (m.size() == 0) {
    m_.resize(0, 0);
    return;
  }
  const double scale = std::max(1.0, m.cwiseAbs().maxCoeff());
  const double asym = (m + m.transpose()).cwiseAbs().maxCoeff();
  if (asym > num_tol().antisymmetry * scale) {
    std::ostringstream msg;
    msg << "SkewMatrix: symmetric part has max entry " << asym << ", tolerance "
        << num_tol().antisymmetry * scale;
    throw InputError(msg.str());
  }
  m_ = 0.5 * (m - m.transpose());
}

double SignedLogDet::value() const {
  if (sign == 0) return 0.0;
  return static_cast<double>(sign) * std::exp(log_magnitude);
}

SignedLogDet signed_logdet(const Matrix& m) {
  if (m.rows() != m.cols()) throw InputError("signed_logdet: matrix must be square");
  const Eigen::Index n = m.rows();
  if (n == 0) return {+1, 0.0};
  const double scale = m.cwiseAbs().maxCoeff();
  if (scale == 0.0) return {0, -std::numeric_limits<double>::infinity()};

  Eigen::PartialPivLU<Matrix> lu(m);
  const double cutoff = num_tol().pivot_rel * scale;
  int sign = static_cast<int>(lu.permutationP().determinant());
  double log_mag = 0.0;
  const auto& packed = lu.matrixLU();
  for (Eigen::Index i = 0; i < n; ++i) {
    const double d = packed(i, i);
    if (std::abs(d) <= cutoff) return {0, -std::numeric_limits<double>::infinity()};
    if (d < 0) sign = -sign;
    log_mag += std::log(std::abs(d));
  }
  return {sign, log_mag};
}

double pfaffian(const SkewMatrix& skew) {
  const int n = skew.dim();
  if (n == 0) return 1.0;
  if (n % 2 != 0) return 0.0;

  // Parlett-Reid tridiagonalization with partial pivoting; the pfaffian is the
  // product of the super-diagonal pivots times the permutation sign.
  Matrix a = skew.mat();
  double val = 1.0;
  for (int k = 0; k + 1 < n; k += 2) {
    int kp = k + 1;
    double best = std::abs(a(k + 1, k));
    for (int i = k + 2; i < n; ++i) {
      if (std::abs(a(i, k)) > best) {
        best = std::abs(a(i, k));
        kp = i;
      }
    }
    if (kp != k + 1) {
      a.row(k + 1).swap(a.row(kp));
      a.col(k + 1).swap(a.col(kp));
      val = -val;
    }
    if (a(k + 1, k) == 0.0) return 0.0;
    val *= a(k, k + 1);
    if (k + 2 < n) {
      const int r = n - (k + 2);
      const Eigen::VectorXd tau = a.row(k).segment(k + 2, r) / a(k, k + 1);
      const Eigen::VectorXd col = a.col(k + 1).segment(k + 2, r);
      a.block(k + 2, k + 2, r, r).noalias() += tau * col.transpose();
      a.block(k + 2, k + 2, r, r).noalias() -= col * tau.transpose();
    }
  }
  return val;
}

SkewMatrix principal_minor(const SkewMatrix& m, std::span<const int> indices) {
  const int n = m.dim();
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] < 0 || indices[i] >= n)
      throw InputError("principal_minor: index out of range");
    if (i > 0 && indices[i] <= indices[i - 1])
      throw InputError("principal_minor: indices must be strictly increasing");
  }
  const int k = static_cast<int>(indices.size());
  Matrix out(k, k);
  for (int i = 0; i < k; ++i)
    for (int j = 0; j < k; ++j) out(i, j) = m(indices[i], indices[j]);
  return SkewMatrix(out);
}

Matrix submatrix(const Matrix& m, std::span<const int> rows, std::span<const int> cols) {
  Matrix out(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(cols.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] < 0 || rows[i] >= m.rows()) throw InputError("submatrix: row index out of range");
    for (std::size_t j = 0; j < cols.size(); ++j) {
      if (cols[j] < 0 || cols[j] >= m.cols())
        throw InputError("submatrix: column index out of range");
      out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = m(rows[i], cols[j]);
    }
  }
  return out;
}

Matrix exp_skew(const SkewMatrix& h) {
  const int n = h.dim();
  if (n == 0) return Matrix(0, 0);
  const std::complex<double> im(0.0, 1.0);
  const CMatrix hermitian = im * h.mat();
  Eigen::SelfAdjointEigenSolver<CMatrix> eig(hermitian);
  if (eig.info() != Eigen::Success)
    throw NumericalError("exp_skew: eigendecomposition failed");
  // h = -i V D V^dag  =>  exp(h) = V exp(-i D) V^dag, real by construction.
  CMatrix phases(n, 1);
  for (int i = 0; i < n; ++i) phases(i, 0) = std::exp(-im * eig.eigenvalues()(i));
  const CMatrix out =
      eig.eigenvectors() * phases.col(0).asDiagonal() * eig.eigenvectors().adjoint();
  return out.real();
}

namespace {

CMatrix orthonormalize_once(const CMatrix& alpha) {
  const Eigen::Index n = alpha.rows();
  const Eigen::Index m = alpha.cols();
  Eigen::HouseholderQR<CMatrix> qr(alpha.adjoint());
  const CMatrix q = qr.householderQ() * CMatrix::Identity(m, n);
  const CMatrix& packed = qr.matrixQR();

  double r_min = std::numeric_limits<double>::infinity();
  double r_max = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double r = std::abs(packed(i, i));
    r_min = std::min(r_min, r);
    r_max = std::max(r_max, r);
  }
  if (r_min == 0.0 || r_max / r_min > num_tol().rank_condition) {
    std::ostringstream msg;
    msg << "orthonormalize: rank loss, |R| diagonal spread " << r_max << " / " << r_min;
    throw DegeneracyError(msg.str());
  }

  // Row i of the result is conj(R_ii)/|R_ii| * q_i^dag / sqrt(2); the phase
  // factor makes the map the identity on already-orthonormal input.
  CMatrix out(n, m);
  const double inv_sqrt2 = 1.0 / std::sqrt(2.0);
  for (Eigen::Index i = 0; i < n; ++i) {
    const std::complex<double> phase = std::conj(packed(i, i)) / std::abs(packed(i, i));
    out.row(i) = (phase * inv_sqrt2) * q.col(i).adjoint();
  }
  return out;
}

double orthonormality_defect(const CMatrix& alpha) {
  const Eigen::Index n = alpha.rows();
  const CMatrix g = alpha * alpha.adjoint();
  return (g - 0.5 * CMatrix::Identity(n, n)).cwiseAbs().maxCoeff();
}

}  // namespace

CMatrix orthonormalize(const CMatrix& alpha) {
  if (alpha.rows() == 0) return alpha;
  if (alpha.rows() > alpha.cols())
    throw InputError("orthonormalize: more rows than columns, rows cannot be orthonormal");
  CMatrix out = orthonormalize_once(alpha);
  if (orthonormality_defect(out) > 1e-12) out = orthonormalize_once(out);
  if (orthonormality_defect(out) > num_tol().orthonormality)
    throw NumericalError("orthonormalize: orthonormality not reached after second pass");
  return out;
}

SkewMatrix covariance_from_alpha(const CMatrix& alpha) {
  const Eigen::Index n = alpha.rows();
  if (alpha.cols() != 2 * n)
    throw InputError("covariance_from_alpha: alpha must be N x 2N");
  if (n == 0) return SkewMatrix(Matrix(0, 0));
  if (orthonormality_defect(alpha) > num_tol().orthonormality_check)
    throw InputError("covariance_from_alpha: alpha rows are not orthonormal");
  const CMatrix g = alpha.adjoint() * alpha;
  return SkewMatrix(4.0 * g.imag());
}

}  // namespace ffmagic
