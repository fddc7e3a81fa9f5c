#include "setdist/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace setdist {

SymmetricMatrix::SymmetricMatrix(const Matrix& a, double rel_tol) {
  if (a.rows() != a.cols()) throw std::invalid_argument("symmetric matrix must be square");
  if (!a.all_finite()) throw std::invalid_argument("non-finite matrix entries");
  const double scale = 1.0 + max_abs(a);
  const int d = a.rows();
  dense_ = Matrix(d, d);
  for (int i = 0; i < d; ++i) {
    for (int j = i; j < d; ++j) {
      if (std::fabs(a(i, j) - a(j, i)) > rel_tol * scale)
        throw std::invalid_argument("matrix is not symmetric");
      const double v = 0.5 * (a(i, j) + a(j, i));
      dense_(i, j) = v;
      dense_(j, i) = v;
    }
  }
}

namespace {

double offdiag_frobenius(const Matrix& a) {
  double sum = 0.0;
  for (int i = 0; i < a.rows(); ++i)
    for (int j = 0; j < a.cols(); ++j)
      if (i != j) sum += a(i, j) * a(i, j);
  return std::sqrt(sum);
}

}  // namespace

EigenDecomposition sym_eigen(const SymmetricMatrix& sym) {
  const int d = sym.order();
  Matrix a = sym.dense();  // working copy, rotated toward diagonal
  Matrix v = Matrix::identity(d);
  const double target = 1e-12 * frobenius_norm(a);

  const int max_sweeps = 100;
  for (int sweep = 0; sweep < max_sweeps; ++sweep) {
    if (offdiag_frobenius(a) <= target) break;
    for (int p = 0; p < d - 1; ++p) {
      for (int q = p + 1; q < d; ++q) {
        const double apq = a(p, q);
        if (apq == 0.0) continue;
        const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
        double t;
        if (std::fabs(theta) > 1e10) {
          t = 1.0 / (2.0 * theta);
        } else {
          t = 1.0 / (std::fabs(theta) + std::sqrt(theta * theta + 1.0));
          if (theta < 0.0) t = -t;
        }
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;

        // Rotate rows/columns p and q of A: A <- J^T A J.
        for (int k = 0; k < d; ++k) {
          const double akp = a(k, p);
          const double akq = a(k, q);
          a(k, p) = c * akp - s * akq;
          a(k, q) = s * akp + c * akq;
        }
        for (int k = 0; k < d; ++k) {
          const double apk = a(p, k);
          const double aqk = a(q, k);
          a(p, k) = c * apk - s * aqk;
          a(q, k) = s * apk + c * aqk;
        }
        for (int k = 0; k < d; ++k) {
          const double vkp = v(k, p);
          const double vkq = v(k, q);
          v(k, p) = c * vkp - s * vkq;
          v(k, q) = s * vkp + c * vkq;
        }
      }
    }
  }

  // Sort eigenpairs ascending.
  std::vector<int> order(d);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int i, int j) { return a(i, i) < a(j, j); });

  EigenDecomposition out;
  out.values.resize(d);
  out.vectors = Matrix(d, d);
  for (int k = 0; k < d; ++k) {
    out.values[k] = a(order[k], order[k]);
    for (int r = 0; r < d; ++r) out.vectors(r, k) = v(r, order[k]);
  }
  return out;
}

SymmetricMatrix psd_sqrt(const SymmetricMatrix& a, double clamp_tol) {
  if (clamp_tol < 0.0) clamp_tol = 1e-10 * frobenius_norm(a.dense());
  EigenDecomposition eig = sym_eigen(a);
  const int d = a.order();

  std::vector<double> roots(d);
  for (int k = 0; k < d; ++k) {
    double lambda = eig.values[k];
    if (lambda < -clamp_tol) throw std::runtime_error("matrix not PSD");
    if (lambda < 0.0) lambda = 0.0;
    roots[k] = std::sqrt(lambda);
  }

  // R = V diag(sqrt(lambda)) V^T, built symmetric.
  Matrix r(d, d);
  for (int i = 0; i < d; ++i) {
    for (int j = i; j < d; ++j) {
      double sum = 0.0;
      for (int k = 0; k < d; ++k) sum += eig.vectors(i, k) * roots[k] * eig.vectors(j, k);
      r(i, j) = sum;
      r(j, i) = sum;
    }
  }
  return SymmetricMatrix(r, 0.0);
}

}  // namespace setdist
