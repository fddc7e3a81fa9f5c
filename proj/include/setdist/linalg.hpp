#pragma once

#include <vector>

#include "setdist/matrix.hpp"

namespace setdist {

/// Square matrix with entries[i][j] == entries[j][i] held exactly. Built from
/// a dense matrix that is symmetric up to a small tolerance; the stored value
/// is the symmetrized average.
class SymmetricMatrix {
 public:
  /// rel_tol bounds the accepted asymmetry, scaled by (1 + max |entry|).
  explicit SymmetricMatrix(const Matrix& a, double rel_tol = 1e-9);

  int order() const { return dense_.rows(); }
  double operator()(int i, int j) const { return dense_(i, j); }
  const Matrix& dense() const { return dense_; }

 private:
  Matrix dense_;
};

struct EigenDecomposition {
  std::vector<double> values;  // ascending
  Matrix vectors;              // column k pairs with values[k]; orthogonal
};

/// Full eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.
/// Sweeps until the off-diagonal Frobenius norm drops below 1e-12 * ||A||_F,
/// capped at 100 sweeps.
EigenDecomposition sym_eigen(const SymmetricMatrix& a);

/// Symmetric PSD square root via eigendecomposition. Eigenvalues in
/// [-clamp_tol, 0) are treated as zero; anything below -clamp_tol is an
/// error. clamp_tol < 0 selects the default 1e-10 * ||A||_F.
SymmetricMatrix psd_sqrt(const SymmetricMatrix& a, double clamp_tol = -1.0);

}  // namespace setdist
