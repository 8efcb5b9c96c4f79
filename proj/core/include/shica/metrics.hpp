#pragma once

#include "shica/types.hpp"

#include <cstddef>
#include <vector>

namespace shica {

/// Amari distance of M = W A, normalized by 1/(2p(p-1)):
///   sum_a (sum_b |M_ab| / max_b |M_ab| - 1) + sum_b (sum_a |M_ab| / max_a |M_ab| - 1)
/// Zero iff M is a scaled permutation. Throws NumericalError on singular input.
double amari_distance(const Matrix& W, const Matrix& A);

/// Mean of amari_distance(W_i, A_i) over views.
double mean_amari_distance(const std::vector<Matrix>& W, const std::vector<Matrix>& A);

struct R2Score {
  Vector per_row;             ///< NaN where the truth row has zero variance
  std::vector<bool> defined;
  double mean = 0.0;          ///< over defined rows only (NaN if none)
};

R2Score r2_score(const Matrix& predicted, const Matrix& truth);

struct ComponentMatch {
  std::vector<std::size_t> est_for_ref;  ///< est row assigned to each ref row
  std::vector<int> signs;                ///< +1 / -1 applied to that est row
  Vector distances;                      ///< per ref row, after unit-normalizing rows
  double total = 0.0;
};

/// Optimal row assignment (Hungarian method) over permutations and signs,
/// cost min(|a - b|, |a + b|) between unit-normalized rows.
ComponentMatch match_components(const Matrix& est, const Matrix& ref);

/// Minimum-cost perfect assignment on a square cost matrix; returns col for each row.
std::vector<std::size_t> hungarian_assignment(const Matrix& cost);

}  // namespace shica
