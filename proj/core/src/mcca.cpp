#include "shica/mcca.hpp"

#include "shica/errors.hpp"
#include "shica/gev.hpp"
#include "shica/rng.hpp"

#include <cstdio>
#include <limits>

namespace shica {

MccaFit fit_mcca(const BlockCovariance& bc) {
  const std::size_t m = bc.m();
  const std::size_t p = bc.p();
  if (m < 2) throw DataError("Multiset CCA needs at least 2 views");

  const BlockPencil pencil = assemble_full(bc);
  const GevSolution sol = solve_gev(pencil.C, pencil.D, p);

  MccaFit fit;
  const auto pp = static_cast<Eigen::Index>(p);
  fit.eigenvalues = sol.eigenvalues;
  fit.top_eigenvalues = sol.eigenvalues.head(pp);
  fit.gap = sol.eigenvalues(pp - 1) - sol.eigenvalues(pp);
  fit.min_top_spacing = std::numeric_limits<double>::infinity();
  for (Eigen::Index j = 0; j + 1 < pp; ++j)
    fit.min_top_spacing = std::min(fit.min_top_spacing, sol.eigenvalues(j) - sol.eigenvalues(j + 1));

  const Matrix top = sol.vectors.leftCols(pp);
  fit.unmixing.reserve(m);
  for (std::size_t i = 0; i < m; ++i) fit.unmixing.emplace_back(top.middleRows(static_cast<Eigen::Index>(i) * pp, pp).transpose());

  char buf[160];
  if (m == 2) fit.warnings.emplace_back("only 2 views: the model is identifiable only under stronger conditions");
  if (fit.gap < kMccaGapWarning) {
    std::snprintf(buf, sizeof buf, "near-degenerate eigen-gap lambda_p - lambda_p+1 = %.3e", fit.gap);
    fit.warnings.emplace_back(buf);
  }
  if (fit.min_top_spacing < kMccaGapWarning) {
    std::snprintf(buf, sizeof buf, "leading eigenvalues not distinct: min spacing %.3e", fit.min_top_spacing);
    fit.warnings.emplace_back(buf);
  }
  return fit;
}

BlockCovariance perturb_covariance(const BlockCovariance& bc, double delta, std::uint64_t seed) {
  if (delta < 0.0) throw DataError("perturbation scale must be >= 0");
  const auto size = static_cast<Eigen::Index>(bc.m() * bc.p());
  BlockPencil pencil = assemble_full(bc);
  if (delta == 0.0) return bc;

  CounterRng rng(seed, 0x5045525455524221ULL);
  Matrix g(size, size);
  for (Eigen::Index c = 0; c < size; ++c)
    for (Eigen::Index r = 0; r < size; ++r) g(r, c) = rng.normal();
  Eigen::HouseholderQR<Matrix> qr(g);
  const Matrix V = qr.householderQ() * Matrix::Identity(size, size);
  Vector u(size);
  for (Eigen::Index k = 0; k < size; ++k) u(k) = rng.uniform_open();
  u /= u.maxCoeff();

  Matrix S = V * u.asDiagonal() * V.transpose();
  S = 0.5 * (S + S.transpose()).eval();
  return split_full(pencil.C + delta * S, bc.m(), bc.p());
}

}  // namespace shica
