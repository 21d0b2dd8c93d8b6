#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <complex>
#include <vector>

#include "ffmagic/linalg.hpp"
#include "ffmagic/rng.hpp"
#include "test_util.hpp"

using ffmagic::CMatrix;
using ffmagic::Matrix;
using ffmagic::Rng;
using ffmagic::SkewMatrix;

namespace {

// Test-local oracles, deliberately naive so they share no code with the
// library implementations.

Matrix drop_rows_cols(const Matrix& m, int a, int b) {
  const int n = static_cast<int>(m.rows());
  Matrix out(n - 2, n - 2);
  int oi = 0;
  for (int i = 0; i < n; ++i) {
    if (i == a || i == b) continue;
    int oj = 0;
    for (int j = 0; j < n; ++j) {
      if (j == a || j == b) continue;
      out(oi, oj) = m(i, j);
      ++oj;
    }
    ++oi;
  }
  return out;
}

double pfaffian_recursive(const Matrix& m) {
  const int n = static_cast<int>(m.rows());
  if (n == 0) return 1.0;
  if (n % 2 != 0) return 0.0;
  double acc = 0.0;
  double sign = 1.0;
  for (int j = 1; j < n; ++j) {
    acc += sign * m(0, j) * pfaffian_recursive(drop_rows_cols(m, 0, j));
    sign = -sign;
  }
  return acc;
}

double det_cofactor(const Matrix& m) {
  const int n = static_cast<int>(m.rows());
  if (n == 0) return 1.0;
  if (n == 1) return m(0, 0);
  double acc = 0.0;
  double sign = 1.0;
  for (int j = 0; j < n; ++j) {
    Matrix minor(n - 1, n - 1);
    for (int i = 1; i < n; ++i) {
      int oj = 0;
      for (int k = 0; k < n; ++k) {
        if (k == j) continue;
        minor(i - 1, oj++) = m(i, k);
      }
    }
    acc += sign * m(0, j) * det_cofactor(minor);
    sign = -sign;
  }
  return acc;
}

Matrix random_skew(int n, Rng& rng) {
  Matrix m = Matrix::Zero(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) {
      m(i, j) = rng.uniform(-1.0, 1.0);
      m(j, i) = -m(i, j);
    }
  return m;
}

CMatrix random_complex(int rows, int cols, Rng& rng) {
  CMatrix m(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j)
      m(i, j) = std::complex<double>(rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0));
  return m;
}

CMatrix row_space_projector(const CMatrix& alpha) {
  const CMatrix gram = alpha * alpha.adjoint();
  return alpha.adjoint() * gram.inverse() * alpha;
}

}  // namespace

TEST_CASE("skew matrix construction symmetrizes and rejects") {
  Matrix ok(2, 2);
  ok << 0.0, 1.5, -1.5, 0.0;
  SkewMatrix s(ok);
  CHECK(s(0, 1) == doctest::Approx(1.5));

  Matrix noisy = ok;
  noisy(1, 0) = -1.5 + 1e-14;
  SkewMatrix sn(noisy);
  CHECK(sn(0, 1) == doctest::Approx(1.5).epsilon(1e-12));
  CHECK(sn(1, 0) == doctest::Approx(-sn(0, 1)));

  Matrix bad = ok;
  bad(1, 0) = -1.5 + 1e-3;
  CHECK_THROWS_AS(SkewMatrix{bad}, ffmagic::InputError);

  Matrix rect(2, 3);
  rect.setZero();
  CHECK_THROWS_AS(SkewMatrix{rect}, ffmagic::InputError);
}

TEST_CASE("pfaffian closed forms") {
  Matrix m2(2, 2);
  m2 << 0, 3, -3, 0;
  CHECK(ffmagic::pfaffian(SkewMatrix(m2)) == doctest::Approx(3.0));

  // Entries a..f = 1..6: Pf = af - be + cd = 6 - 10 + 12 = 8.
  Matrix m4(4, 4);
  m4 << 0, 1, 2, 3, -1, 0, 4, 5, -2, -4, 0, 6, -3, -5, -6, 0;
  CHECK(ffmagic::pfaffian(SkewMatrix(m4)) == doctest::Approx(8.0));

  CHECK(ffmagic::pfaffian(SkewMatrix()) == doctest::Approx(1.0));
  Matrix m3 = Matrix::Zero(3, 3);
  m3(0, 1) = 1;
  m3(1, 0) = -1;
  CHECK(ffmagic::pfaffian(SkewMatrix(m3)) == doctest::Approx(0.0));
}

TEST_CASE("pfaffian pivoting path with singular leading block") {
  // A(0,1) = 0 forces a row/column swap. Pf = cd - be.
  const double b = 0.7, c = -1.3, d = 0.4, e = 2.1, f = -0.9;
  Matrix m(4, 4);
  m << 0, 0, b, c, 0, 0, d, e, -b, -d, 0, f, -c, -e, -f, 0;
  const double expected = c * d - b * e;
  CHECK(ffmagic::pfaffian(SkewMatrix(m)) == doctest::Approx(expected).epsilon(1e-12));
  CHECK(pfaffian_recursive(m) == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("pfaffian matches recursive oracle on random matrices") {
  Rng rng(20260816);
  for (int n = 2; n <= 10; n += 2) {
    for (int rep = 0; rep < 4; ++rep) {
      const Matrix m = random_skew(n, rng);
      const double exact = pfaffian_recursive(m);
      CHECK(ffmagic::pfaffian(SkewMatrix(m)) == doctest::Approx(exact).epsilon(1e-10));
    }
  }
}

TEST_CASE("pfaffian squared equals determinant at larger size") {
  Rng rng(77);
  const Matrix m = random_skew(16, rng);
  const double pf = ffmagic::pfaffian(SkewMatrix(m));
  const auto det = ffmagic::signed_logdet(m);
  REQUIRE(det.sign == 1);
  CHECK(2.0 * std::log(std::abs(pf)) == doctest::Approx(det.log_magnitude).epsilon(1e-10));
}

TEST_CASE("signed_logdet basics") {
  CHECK(ffmagic::signed_logdet(Matrix::Identity(4, 4)).sign == 1);
  CHECK(ffmagic::signed_logdet(Matrix::Identity(4, 4)).log_magnitude == doctest::Approx(0.0));

  Matrix d = Matrix::Zero(2, 2);
  d(0, 0) = 2.0;
  d(1, 1) = -3.0;
  const auto r = ffmagic::signed_logdet(d);
  CHECK(r.sign == -1);
  CHECK(r.log_magnitude == doctest::Approx(std::log(6.0)));
  CHECK(r.value() == doctest::Approx(-6.0));

  Matrix sing(3, 3);
  sing << 1, 2, 3, 2, 4, 6, 0, 1, 5;  // row1 = 2*row0
  const auto rs = ffmagic::signed_logdet(sing);
  CHECK(rs.sign == 0);
  CHECK(std::isinf(rs.log_magnitude));

  const auto r0 = ffmagic::signed_logdet(Matrix(0, 0));
  CHECK(r0.sign == 1);
  CHECK(r0.log_magnitude == doctest::Approx(0.0));
}

TEST_CASE("signed_logdet matches cofactor oracle") {
  Rng rng(99);
  for (int n : {3, 5, 7}) {
    for (int rep = 0; rep < 4; ++rep) {
      Matrix m(n, n);
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) m(i, j) = rng.uniform(-2.0, 2.0);
      const double exact = det_cofactor(m);
      const auto r = ffmagic::signed_logdet(m);
      REQUIRE(r.sign == (exact > 0 ? 1 : -1));
      CHECK(r.log_magnitude == doctest::Approx(std::log(std::abs(exact))).epsilon(1e-10));
    }
  }
}

TEST_CASE("principal minor extraction") {
  Rng rng(5);
  const Matrix m = random_skew(6, rng);
  const SkewMatrix s(m);
  const std::vector<int> idx{0, 2, 5};
  const SkewMatrix sub = ffmagic::principal_minor(s, idx);
  REQUIRE(sub.dim() == 3);
  CHECK(sub(0, 1) == doctest::Approx(m(0, 2)));
  CHECK(sub(0, 2) == doctest::Approx(m(0, 5)));
  CHECK(sub(1, 2) == doctest::Approx(m(2, 5)));

  const std::vector<int> empty;
  CHECK(ffmagic::principal_minor(s, empty).dim() == 0);

  const std::vector<int> unsorted{2, 0};
  CHECK_THROWS_AS(ffmagic::principal_minor(s, unsorted), ffmagic::InputError);
  const std::vector<int> oob{0, 6};
  CHECK_THROWS_AS(ffmagic::principal_minor(s, oob), ffmagic::InputError);
}

TEST_CASE("sum of principal minors equals det(I + Gamma)") {
  // Every subset, odd sizes included (those determinants vanish).
  Rng rng(31337);
  const CMatrix alpha = fftest::random_gaussian_alpha(2, rng);
  const SkewMatrix gamma = ffmagic::covariance_from_alpha(alpha);
  const int n = gamma.dim();
  double total = 0.0;
  for (int mask = 0; mask < (1 << n); ++mask) {
    std::vector<int> idx;
    for (int i = 0; i < n; ++i)
      if (mask & (1 << i)) idx.push_back(i);
    total += ffmagic::signed_logdet(ffmagic::principal_minor(gamma, idx).mat()).value();
  }
  const double direct = ffmagic::signed_logdet(Matrix::Identity(n, n) + gamma.mat()).value();
  CHECK(total == doctest::Approx(direct).epsilon(1e-10));
  CHECK(direct == doctest::Approx(4.0).epsilon(1e-10));  // 2^N for a pure state
}

TEST_CASE("orthonormalize produces orthonormal rows and keeps the row space") {
  Rng rng(12);
  const CMatrix raw = random_complex(3, 6, rng);
  const CMatrix ortho = ffmagic::orthonormalize(raw);
  const CMatrix gram = ortho * ortho.adjoint();
  CHECK((gram - 0.5 * CMatrix::Identity(3, 3)).cwiseAbs().maxCoeff() < 1e-12);

  const CMatrix p_raw = row_space_projector(raw);
  const CMatrix p_ortho = row_space_projector(ortho);
  CHECK((p_raw - p_ortho).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("orthonormalize is idempotent") {
  Rng rng(13);
  const CMatrix once = ffmagic::orthonormalize(random_complex(4, 8, rng));
  const CMatrix twice = ffmagic::orthonormalize(once);
  CHECK((twice - once).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("orthonormalize rejects rank-deficient input") {
  Rng rng(14);
  CMatrix m = random_complex(3, 6, rng);
  m.row(2) = m.row(0);
  CHECK_THROWS_AS(ffmagic::orthonormalize(m), ffmagic::DegeneracyError);

  CMatrix wide = random_complex(4, 3, rng);
  CHECK_THROWS_AS(ffmagic::orthonormalize(wide), ffmagic::InputError);
}

TEST_CASE("covariance of computational product states") {
  // Site in |0>: annihilator (g0 + i g1)/2, covariance block [[0,1],[-1,0]].
  // Site in |1>: conjugate annihilator, block sign flips.
  CMatrix alpha = CMatrix::Zero(2, 4);
  alpha(0, 0) = 0.5;
  alpha(0, 1) = std::complex<double>(0, 0.5);
  alpha(1, 2) = 0.5;
  alpha(1, 3) = std::complex<double>(0, -0.5);
  const SkewMatrix gamma = ffmagic::covariance_from_alpha(alpha);
  CHECK(gamma(0, 1) == doctest::Approx(1.0));
  CHECK(gamma(1, 0) == doctest::Approx(-1.0));
  CHECK(gamma(2, 3) == doctest::Approx(-1.0));
  CHECK(gamma(0, 2) == doctest::Approx(0.0));
  CHECK(gamma(1, 3) == doctest::Approx(0.0));
}

TEST_CASE("covariance of a pure state is orthogonal") {
  Rng rng(21);
  const CMatrix alpha = fftest::random_gaussian_alpha(4, rng);
  const SkewMatrix gamma = ffmagic::covariance_from_alpha(alpha);
  const Matrix prod = gamma.mat() * gamma.mat().transpose();
  CHECK((prod - Matrix::Identity(8, 8)).cwiseAbs().maxCoeff() < 1e-10);
  // Annihilator anticommutation: the row space stays isotropic.
  CHECK((alpha * alpha.transpose()).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("covariance_from_alpha rejects bad input") {
  Rng rng(22);
  const CMatrix not_ortho = random_complex(3, 6, rng);
  CHECK_THROWS_AS(ffmagic::covariance_from_alpha(not_ortho), ffmagic::InputError);
  const CMatrix wrong_shape = ffmagic::orthonormalize(random_complex(2, 6, rng));
  CHECK_THROWS_AS(ffmagic::covariance_from_alpha(wrong_shape), ffmagic::InputError);
}

TEST_CASE("rng substreams are independent of draw order") {
  Rng a(42);
  Rng b(42);
  (void)a.next_u64();
  (void)a.next_u64();
  Rng child_after = a.child(7);
  Rng child_fresh = b.child(7);
  CHECK(child_after.next_u64() == child_fresh.next_u64());
  CHECK(Rng(42).child(7).next_u64() != Rng(42).child(8).next_u64());

  Rng u(1);
  for (int i = 0; i < 1000; ++i) {
    const double x = u.uniform01();
    CHECK(x >= 0.0);
    CHECK(x < 1.0);
  }
}
