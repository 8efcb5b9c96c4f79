#include "shica/gev.hpp"

#include "shica/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace shica {

GevSolution solve_gev(const Matrix& C, const Matrix& D, std::size_t block) {
  if (C.rows() != C.cols() || D.rows() != D.cols() || C.rows() != D.rows())
    throw ShapeError("solve_gev needs square matrices of equal size");
  const Eigen::Index size = C.rows();

  Eigen::LLT<Matrix> llt(D);
  if (llt.info() != Eigen::Success) throw NumericalError("D is not positive definite (Cholesky failed)");
  const auto L = llt.matrixL();

  // S = L^{-1} C L^{-T}
  Matrix S = L.solve(C);
  S = L.solve(S.transpose()).transpose();
  S = 0.5 * (S + S.transpose()).eval();

  Eigen::SelfAdjointEigenSolver<Matrix> eig(S);
  if (eig.info() != Eigen::Success) throw NumericalError("symmetric eigensolver did not converge");

  // u = L^{-T} z
  Matrix U = L.transpose().solve(eig.eigenvectors());

  std::vector<Eigen::Index> order(static_cast<std::size_t>(size));
  std::iota(order.begin(), order.end(), 0);
  const Vector& vals = eig.eigenvalues();
  std::stable_sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) { return vals(a) > vals(b); });

  GevSolution out;
  out.eigenvalues.resize(size);
  out.vectors.resize(size, size);
  for (Eigen::Index k = 0; k < size; ++k) {
    const Eigen::Index src = order[static_cast<std::size_t>(k)];
    out.eigenvalues(k) = vals(src);
    Eigen::Index arg = 0;
    U.col(src).cwiseAbs().maxCoeff(&arg);
    out.vectors.col(k) = U(arg, src) < 0.0 ? Vector(-U.col(src)) : Vector(U.col(src));
  }
  out.p = block == 0 ? static_cast<std::size_t>(size) : block;
  out.m = static_cast<std::size_t>(size) / out.p;
  if (out.m * out.p != static_cast<std::size_t>(size)) throw ShapeError("block size does not divide pencil size");
  return out;
}

namespace {

double secular(const Vector& s, double lambda) {
  double acc = 0.0;
  for (Eigen::Index i = 0; i < s.size(); ++i) {
    const double den = lambda * (1.0 + s(i)) - s(i);
    // Left of (or at) a pole after rounding: report "left of the root".
    if (!(den > 0.0)) return std::numeric_limits<double>::infinity();
    acc += 1.0 / den;
  }
  return acc - 1.0;
}

double secular_derivative(const Vector& s, double lambda) {
  double acc = 0.0;
  for (Eigen::Index i = 0; i < s.size(); ++i) {
    const double den = lambda * (1.0 + s(i)) - s(i);
    acc -= (1.0 + s(i)) / (den * den);
  }
  return acc;
}

}  // namespace

double secular_root(const Vector& variances) {
  const auto m = variances.size();
  if (m < 2) throw DataError("secular equation needs at least 2 views");
  if ((variances.array() < 0.0).any() || !variances.allFinite()) throw DataError("noise variances must be finite and >= 0");

  // On (max_i s_i/(1+s_i), inf) every term is positive and decreasing, so
  // the function falls from +inf to -1 and has exactly one root there.
  double lo = (variances.array() / (1.0 + variances.array())).maxCoeff();
  double hi = static_cast<double>(m) + variances.maxCoeff();
  if (!(secular(variances, hi) <= 0.0)) throw NumericalError("secular root bracketing failed");

  while (hi - lo > 1e-13) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    if (secular(variances, mid) > 0.0) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  double root = 0.5 * (lo + hi);
  for (int k = 0; k < 2; ++k) {
    const double step = secular(variances, root) / secular_derivative(variances, root);
    const double next = root - step;
    if (std::isfinite(next) && next > lo - 1e-12 && next < hi + 1e-12) root = next;
  }
  return root;
}

Vector theoretical_eigenvalues(const Matrix& noise_vars) {
  Vector out(noise_vars.cols());
  for (Eigen::Index j = 0; j < noise_vars.cols(); ++j) out(j) = secular_root(noise_vars.col(j));
  std::sort(out.data(), out.data() + out.size(), std::greater<>());
  return out;
}

GapBounds eigen_gap_bounds(const Matrix& noise_vars) {
  const double m = static_cast<double>(noise_vars.rows());
  const double smax = noise_vars.maxCoeff();
  // Non-top roots interlace the poles s_ij / (1 + s_ij), so the largest variance bounds them.
  return {1.0 + (m - 1.0) / (1.0 + smax), 1.0 - 1.0 / (1.0 + smax)};
}

}  // namespace shica
