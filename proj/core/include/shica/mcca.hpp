#pragma once

#include "shica/covariance.hpp"
#include "shica/types.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace shica {

/// Near-degenerate threshold on lambda_p - lambda_{p+1}.
inline constexpr double kMccaGapWarning = 1e-8;

struct MccaFit {
  std::vector<Matrix> unmixing;  ///< W_i: transposed i-th p x p block of the top-p eigenvectors
  Vector top_eigenvalues;        ///< lambda_1 >= ... >= lambda_p
  Vector eigenvalues;            ///< full spectrum, descending
  double gap = 0.0;              ///< lambda_p - lambda_{p+1}
  double min_top_spacing = 0.0;  ///< smallest lambda_j - lambda_{j+1} among the top p (inf when p = 1)
  std::vector<std::string> warnings;
};

/// Multiset CCA: top-p generalized eigenvectors of (C, D) sliced into views.
/// Warns (does not fail) for m = 2 or a near-degenerate spectrum.
MccaFit fit_mcca(const BlockCovariance& bc);

/// C + delta * S where S is SPD with unit spectral norm, drawn from `seed`:
/// S = V diag(u) V^T, V orthogonal (QR of a Gaussian matrix), u uniform scaled to max 1.
BlockCovariance perturb_covariance(const BlockCovariance& bc, double delta, std::uint64_t seed);

}  // namespace shica
