#pragma once

// Shared helpers for the test binaries. Oracles here are deliberately naive
// and independent of the library implementations.

#include <Eigen/Dense>
#include <cmath>
#include <complex>
#include <vector>

#include "ffmagic/linalg.hpp"
#include "ffmagic/rng.hpp"

namespace fftest {

inline Eigen::MatrixXd random_orthogonal(int n, ffmagic::Rng& rng) {
  Eigen::MatrixXd g(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) g(i, j) = rng.normal();
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
  Eigen::MatrixXd q = qr.householderQ();
  const Eigen::MatrixXd r = qr.matrixQR();
  for (int i = 0; i < n; ++i)
    if (r(i, i) < 0) q.col(i) = -q.col(i);
  return q;
}

/// Annihilator matrix of the vacuum |0...0>, rows (g_{2j} + i g_{2j+1})/2.
inline ffmagic::CMatrix vacuum_alpha(int n_modes) {
  ffmagic::CMatrix a = ffmagic::CMatrix::Zero(n_modes, 2 * n_modes);
  for (int j = 0; j < n_modes; ++j) {
    a(j, 2 * j) = 0.5;
    a(j, 2 * j + 1) = std::complex<double>(0.0, 0.5);
  }
  return a;
}

/// A random valid pure-Gaussian annihilator matrix: the vacuum rotated by a
/// random orthogonal. Keeps both invariants, alpha alpha^dag = I/2 and
/// alpha alpha^T = 0.
inline ffmagic::CMatrix random_gaussian_alpha(int n_modes, ffmagic::Rng& rng) {
  return vacuum_alpha(n_modes) * random_orthogonal(2 * n_modes, rng);
}

}  // namespace fftest
