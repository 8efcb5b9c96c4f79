#include "shica/covariance.hpp"

#include "shica/errors.hpp"

namespace shica {

BlockCovariance::BlockCovariance(std::size_t m, std::size_t p, std::vector<Matrix> blocks)
    : m_(m), p_(p), blocks_(std::move(blocks)) {
  if (blocks_.size() != m_ * m_) throw ShapeError("expected m*m covariance blocks");
  for (const auto& b : blocks_) {
    if (static_cast<std::size_t>(b.rows()) != p_ || static_cast<std::size_t>(b.cols()) != p_)
      throw ShapeError("covariance block is not p x p");
  }
}

BlockCovariance BlockCovariance::transformed(const std::vector<Matrix>& per_view) const {
  if (per_view.size() != m_) throw ShapeError("transform count does not match view count");
  std::vector<Matrix> out;
  out.reserve(blocks_.size());
  for (std::size_t i = 0; i < m_; ++i)
    for (std::size_t j = 0; j < m_; ++j) out.emplace_back(per_view[i] * block(i, j) * per_view[j].transpose());
  const auto q = per_view.empty() ? 0 : static_cast<std::size_t>(per_view.front().rows());
  return BlockCovariance(m_, q, std::move(out));
}

BlockCovariance sample_covariance(const MultiViewData& data, bool centered) {
  const std::size_t m = data.m();
  const std::size_t p = data.p();
  const std::size_t n = data.n();
  if (m == 0) throw DataError("no views");
  if (n < 2) throw DataError("sample covariance needs n >= 2 samples, got " + std::to_string(n));

  // Stack views so one symmetric rank update produces every block.
  Matrix stacked(static_cast<Eigen::Index>(m * p), static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < m; ++i) {
    auto rows = stacked.middleRows(static_cast<Eigen::Index>(i * p), static_cast<Eigen::Index>(p));
    rows = data.view(i);
    if (centered) {
      // rowwise().mean() on column-major storage is several times slower than a GEMV
      const Vector mean = (rows * Vector::Ones(rows.cols())) / static_cast<double>(n);
      rows.colwise() -= mean;
    }
  }
  Matrix full = Matrix::Zero(stacked.rows(), stacked.rows());
  full.selfadjointView<Eigen::Lower>().rankUpdate(stacked, 1.0 / static_cast<double>(n));
  full = full.selfadjointView<Eigen::Lower>();
  full = 0.5 * (full + full.transpose()).eval();
  return split_full(full, m, p);
}

BlockCovariance model_covariance(const ModelParams& params) {
  if (params.direction != Direction::mixing) throw DataError("model_covariance needs mixing matrices");
  const std::size_t m = params.m();
  const std::size_t p = params.p();
  std::vector<Matrix> blocks;
  blocks.reserve(m * m);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < m; ++j) {
      Matrix inner = Matrix::Identity(static_cast<Eigen::Index>(p), static_cast<Eigen::Index>(p));
      if (i == j) inner.diagonal() += params.noise_vars[i];
      blocks.emplace_back(params.matrices[i] * inner * params.matrices[j].transpose());
    }
  }
  return BlockCovariance(m, p, std::move(blocks));
}

BlockPencil assemble_full(const BlockCovariance& bc) {
  const auto m = static_cast<Eigen::Index>(bc.m());
  const auto p = static_cast<Eigen::Index>(bc.p());
  BlockPencil out{Matrix::Zero(m * p, m * p), Matrix::Zero(m * p, m * p)};
  for (Eigen::Index i = 0; i < m; ++i) {
    for (Eigen::Index j = 0; j < m; ++j) {
      const auto& b = bc.block(static_cast<std::size_t>(i), static_cast<std::size_t>(j));
      out.C.block(i * p, j * p, p, p) = b;
      if (i == j) out.D.block(i * p, j * p, p, p) = b;
    }
  }
  return out;
}

BlockCovariance split_full(const Matrix& full, std::size_t m, std::size_t p) {
  const auto pm = static_cast<Eigen::Index>(m * p);
  if (full.rows() != pm || full.cols() != pm) throw ShapeError("full covariance is not pm x pm");
  const auto pp = static_cast<Eigen::Index>(p);
  std::vector<Matrix> blocks;
  blocks.reserve(m * m);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < m; ++j)
      blocks.emplace_back(full.block(static_cast<Eigen::Index>(i) * pp, static_cast<Eigen::Index>(j) * pp, pp, pp));
  return BlockCovariance(m, p, std::move(blocks));
}

}  // namespace shica
