#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <vector>

namespace shica {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// m views of p x n observations sharing the sample axis (columns are samples).
class MultiViewData {
 public:
  MultiViewData() = default;
  explicit MultiViewData(std::vector<Matrix> views);

  std::size_t m() const noexcept { return views_.size(); }
  std::size_t p() const noexcept { return views_.empty() ? 0 : static_cast<std::size_t>(views_.front().rows()); }
  std::size_t n() const noexcept { return views_.empty() ? 0 : static_cast<std::size_t>(views_.front().cols()); }

  const Matrix& view(std::size_t i) const { return views_.at(i); }
  const std::vector<Matrix>& views() const noexcept { return views_; }

  /// Copy with per-row means removed from every view.
  MultiViewData centered() const;
  /// Copy with each view left-multiplied by the matching matrix (y_i = W_i x_i).
  MultiViewData transformed(const std::vector<Matrix>& per_view) const;

 private:
  std::vector<Matrix> views_;
};

enum class Direction { mixing, unmixing };

/// Per-view mixing (A_i) or unmixing (W_i) matrices plus diagonal noise variances.
struct ModelParams {
  Direction direction = Direction::mixing;
  std::vector<Matrix> matrices;
  std::vector<Vector> noise_vars;

  std::size_t m() const noexcept { return matrices.size(); }
  std::size_t p() const noexcept { return matrices.empty() ? 0 : static_cast<std::size_t>(matrices.front().rows()); }

  /// Throws ShapeError / DataError / NumericalError when an invariant is broken.
  void validate() const;
  /// Same model expressed in the other direction (matrix inverses, same noise).
  ModelParams inverted() const;
  /// noise_vars stacked as an m x p matrix (row i = diagonal of Sigma_i).
  Matrix noise_matrix() const;
};

}  // namespace shica
