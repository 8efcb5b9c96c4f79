#pragma once

// Approximate joint diagonalization of symmetric positive-definite matrices:
// find B such that every B K_i B^T is as diagonal as possible, measured by
//
//   J(B) = sum_i w_i * 1/2 * [ log det diag(B K_i B^T) - log det(B K_i B^T) ]
//
// J >= 0 with equality iff every transformed matrix is diagonal. J is
// invariant to left-multiplication of B by a positive diagonal matrix.

#include "shica/types.hpp"

#include <vector>

namespace shica {

struct JdProblem {
  std::vector<Matrix> mats;
  std::vector<double> weights;  ///< empty means all ones
};

struct JdOptions {
  int max_iter = 1000;
  double tol = 1e-10;
  int max_halvings = 20;      ///< backtracking floor is 2^-max_halvings
  double min_curvature = 1e-4; ///< lower bound on det of each 2x2 Hessian block
};

struct JdResult {
  Matrix B;
  std::vector<double> criterion_trace;  ///< value at B = I first, then one per accepted step
  int iterations = 0;
  bool converged = false;
  int fallback_sweeps = 0;  ///< pairwise sweeps used after failed quasi-Newton searches
};

double pham_criterion(const Matrix& B, const JdProblem& problem);

/// Relative quasi-Newton descent from B = I with a diagonal Hessian model and
/// halving line search. When the quasi-Newton search fails, a pairwise sweep
/// over (a, b) planes is attempted before giving up with converged = false.
JdResult joint_diagonalize(const JdProblem& problem, const JdOptions& opts = {});

}  // namespace shica
