#include <cmath>
#include <stdexcept>

#include "doctest.h"
#include "setdist/linalg.hpp"
#include "setdist/rng.hpp"

namespace {

using namespace setdist;

Matrix random_symmetric(Rng& rng, int n) {
  Matrix a(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = i; j < n; ++j) a(i, j) = a(j, i) = rng.normal();
  return a;
}

Matrix random_psd(Rng& rng, int n) {
  Matrix b(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) b(i, j) = rng.normal();
  return matmul(b.transpose(), b);
}

TEST_SUITE_BEGIN("linalg");

TEST_CASE("symmetric wrapper accepts and averages mild asymmetry") {
  Matrix a(2, 2);
  a(0, 0) = 1.0; a(1, 1) = 2.0;
  a(0, 1) = 3.0; a(1, 0) = 3.0 + 1e-12;
  const SymmetricMatrix s(a);
  CHECK(s.order() == 2);
  CHECK(s(0, 1) == s(1, 0));
  CHECK(s(0, 1) == doctest::Approx(3.0).epsilon(1e-10));
}

TEST_CASE("symmetric wrapper rejects gross asymmetry") {
  Matrix a(2, 2);
  a(0, 1) = 1.0; a(1, 0) = 2.0;
  CHECK_THROWS_AS(SymmetricMatrix{a}, std::invalid_argument);
}

TEST_CASE("symmetric wrapper rejects non-square input") {
  CHECK_THROWS_AS(SymmetricMatrix{Matrix(2, 3)}, std::invalid_argument);
}

TEST_CASE("eigenvalues of a hand example") {
  Matrix a(2, 2);
  a(0, 0) = 2; a(0, 1) = 1; a(1, 0) = 1; a(1, 1) = 2;
  const EigenDecomposition eig = sym_eigen(SymmetricMatrix{a});
  REQUIRE(eig.values.size() == 2);
  CHECK(eig.values[0] == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(eig.values[1] == doctest::Approx(3.0).epsilon(1e-12));
}

TEST_CASE("diagonal matrices keep their entries as eigenvalues") {
  Matrix a(3, 3);
  a(0, 0) = 5; a(1, 1) = -1; a(2, 2) = 2;
  const EigenDecomposition eig = sym_eigen(SymmetricMatrix{a});
  CHECK(eig.values[0] == doctest::Approx(-1.0));
  CHECK(eig.values[1] == doctest::Approx(2.0));
  CHECK(eig.values[2] == doctest::Approx(5.0));
}

TEST_CASE("eigendecomposition reconstructs random symmetric matrices") {
  Rng rng(17);
  for (int trial = 0; trial < 50; ++trial) {
    const int n = 2 + static_cast<int>(rng.uniform_int(0, 4));
    const Matrix a = random_symmetric(rng, n);
    const EigenDecomposition eig = sym_eigen(SymmetricMatrix{a});

    for (size_t k = 1; k < eig.values.size(); ++k) CHECK(eig.values[k - 1] <= eig.values[k]);

    // columns orthonormal
    const Matrix vtv = matmul(eig.vectors.transpose(), eig.vectors);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j)
        CHECK(vtv(i, j) == doctest::Approx(i == j ? 1.0 : 0.0).epsilon(1e-9));

    // V diag(values) V^T == A
    Matrix scaled = eig.vectors;
    for (int i = 0; i < n; ++i)
      for (int k = 0; k < n; ++k) scaled(i, k) *= eig.values[static_cast<size_t>(k)];
    const Matrix rebuilt = matmul(scaled, eig.vectors.transpose());
    const double tol = 1e-9 * (1.0 + frobenius_norm(a));
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) CHECK(std::abs(rebuilt(i, j) - a(i, j)) < tol);
  }
}

TEST_CASE("psd_sqrt of the identity is the identity") {
  const SymmetricMatrix r = psd_sqrt(SymmetricMatrix{Matrix::identity(3)});
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) CHECK(r(i, j) == doctest::Approx(i == j ? 1.0 : 0.0).epsilon(1e-12));
}

TEST_CASE("psd_sqrt of a diagonal matrix takes elementwise roots") {
  Matrix a(2, 2);
  a(0, 0) = 4; a(1, 1) = 9;
  const SymmetricMatrix r = psd_sqrt(SymmetricMatrix{a});
  CHECK(r(0, 0) == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(r(1, 1) == doctest::Approx(3.0).epsilon(1e-12));
  CHECK(r(0, 1) == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("psd_sqrt squares back to the input") {
  Rng rng(23);
  for (int trial = 0; trial < 30; ++trial) {
    const int n = 2 + static_cast<int>(rng.uniform_int(0, 3));
    const Matrix a = random_psd(rng, n);
    const SymmetricMatrix r = psd_sqrt(SymmetricMatrix{a});
    const Matrix r2 = matmul(r.dense(), r.dense());
    const double tol = 1e-8 * (1.0 + frobenius_norm(a));
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) CHECK(std::abs(r2(i, j) - a(i, j)) < tol);
  }
}

TEST_CASE("psd_sqrt tolerates roundoff-negative eigenvalues") {
  // rank-1 Gram matrix; the numerical kernel dips slightly below zero
  Matrix v(3, 1);
  v(0, 0) = 1.0; v(1, 0) = 2.0; v(2, 0) = 3.0;
  const Matrix a = matmul(v, v.transpose());
  const SymmetricMatrix r = psd_sqrt(SymmetricMatrix{a});
  const Matrix r2 = matmul(r.dense(), r.dense());
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) CHECK(r2(i, j) == doctest::Approx(a(i, j)).epsilon(1e-8));
}

TEST_CASE("psd_sqrt rejects clearly indefinite matrices") {
  Matrix a(2, 2);
  a(0, 0) = 1.0; a(1, 1) = -1.0;
  CHECK_THROWS_WITH_AS(psd_sqrt(SymmetricMatrix{a}), "matrix not PSD", std::runtime_error);
}

TEST_SUITE_END();

}  // namespace
