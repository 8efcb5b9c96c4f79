#pragma once

#include "shica/types.hpp"

#include <cstddef>
#include <vector>

namespace shica {

/// m x m grid of p x p cross-covariance blocks, block (i, j) = E[x_i x_j^T].
class BlockCovariance {
 public:
  BlockCovariance() = default;
  /// `blocks` is row-major over (i, j); throws ShapeError on size mismatch.
  BlockCovariance(std::size_t m, std::size_t p, std::vector<Matrix> blocks);

  std::size_t m() const noexcept { return m_; }
  std::size_t p() const noexcept { return p_; }
  const Matrix& block(std::size_t i, std::size_t j) const { return blocks_.at(i * m_ + j); }

  /// Blocks of W_i C_ij W_j^T.
  BlockCovariance transformed(const std::vector<Matrix>& per_view) const;

 private:
  std::size_t m_ = 0;
  std::size_t p_ = 0;
  std::vector<Matrix> blocks_;
};

/// C_ij = (1/n) X_i X_j^T after optional per-row mean removal, symmetrized.
BlockCovariance sample_covariance(const MultiViewData& data, bool centered);

/// Population blocks A_i (I + delta_ij Sigma_i) A_j^T. Requires mixing direction.
BlockCovariance model_covariance(const ModelParams& params);

struct BlockPencil {
  Matrix C;  ///< full pm x pm block matrix
  Matrix D;  ///< C with off-diagonal blocks zeroed
};

BlockPencil assemble_full(const BlockCovariance& bc);

/// Splits a pm x pm matrix back into blocks.
BlockCovariance split_full(const Matrix& full, std::size_t m, std::size_t p);

}  // namespace shica
