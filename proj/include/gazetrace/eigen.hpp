#pragma once

#include <vector>

#include "gazetrace/matrix.hpp"

namespace gazetrace {

struct SymmetricEigen {
  std::vector<double> values;  // descending
  Matrix vectors;              // column j pairs with values[j]
  int sweeps = 0;
};

/// Cyclic Jacobi eigendecomposition of a symmetric matrix. Stops once the
/// off-diagonal Frobenius norm is at most `tol` times the matrix norm.
/// Each eigenvector's largest-magnitude entry is made positive.
SymmetricEigen eigen_symmetric(const Matrix& a, double tol = 1e-12, int max_sweeps = 100);

/// M^(-1/2) for a symmetric positive definite M.
Matrix inverse_sqrt_symmetric(const Matrix& m);

}  // namespace gazetrace
