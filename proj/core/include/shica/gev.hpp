#pragma once

// Symmetric-definite generalized eigenproblem C u = lambda D u and the
// closed-form eigenvalue predictions of the exact multi-view pencil.

#include "shica/types.hpp"

#include <cstddef>

namespace shica {

struct GevSolution {
  Vector eigenvalues;  ///< descending
  Matrix vectors;      ///< column k pairs with eigenvalues(k); D-orthonormal
  std::size_t p = 0;   ///< block size (C.rows() when unblocked)
  std::size_t m = 1;   ///< number of blocks
};

/// Cholesky D = L L^T, eigendecomposition of L^{-1} C L^{-T}, back-transform.
/// Each eigenvector is signed so that its largest-magnitude entry is positive.
/// Throws NumericalError when D is not positive definite.
GevSolution solve_gev(const Matrix& C, const Matrix& D, std::size_t block = 0);

/// For every component j (column of the m x p `noise_vars`), the largest root of
///   sum_i 1 / (lambda (1 + s_ij) - s_ij) = 1,
/// returned sorted descending. Zero variances are allowed as a limit.
Vector theoretical_eigenvalues(const Matrix& noise_vars);

/// Root for a single component (`variances` holds s_1j..s_mj).
double secular_root(const Vector& variances);

struct GapBounds {
  double lower_top;   ///< lambda_p >= 1 + (m-1)/(1+s_max)
  double upper_rest;  ///< lambda_{p+1} <= 1 - 1/(1+s_max)
};

GapBounds eigen_gap_bounds(const Matrix& noise_vars);

}  // namespace shica
