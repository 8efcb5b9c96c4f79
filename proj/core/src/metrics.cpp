#include "shica/metrics.hpp"

#include "shica/errors.hpp"

#include <cmath>
#include <limits>

namespace shica {

double amari_distance(const Matrix& W, const Matrix& A) {
  if (W.rows() != W.cols() || A.rows() != A.cols() || W.rows() != A.rows())
    throw ShapeError("amari_distance needs two p x p matrices");
  const auto p = W.rows();
  if (!Eigen::FullPivLU<Matrix>(W).isInvertible() || !Eigen::FullPivLU<Matrix>(A).isInvertible())
    throw NumericalError("amari_distance: singular input");
  if (p == 1) return 0.0;
  const Matrix M = (W * A).cwiseAbs();
  const double rows = (M.rowwise().sum().array() / M.rowwise().maxCoeff().array() - 1.0).sum();
  const double cols = (M.colwise().sum().array() / M.colwise().maxCoeff().array() - 1.0).sum();
  return (rows + cols) / (2.0 * static_cast<double>(p) * static_cast<double>(p - 1));
}

double mean_amari_distance(const std::vector<Matrix>& W, const std::vector<Matrix>& A) {
  if (W.size() != A.size() || W.empty()) throw ShapeError("mean_amari_distance needs matching non-empty lists");
  double acc = 0.0;
  for (std::size_t i = 0; i < W.size(); ++i) acc += amari_distance(W[i], A[i]);
  return acc / static_cast<double>(W.size());
}

R2Score r2_score(const Matrix& predicted, const Matrix& truth) {
  if (predicted.rows() != truth.rows() || predicted.cols() != truth.cols()) throw ShapeError("r2_score shape mismatch");
  if (truth.cols() < 2) throw DataError("r2_score needs n >= 2");
  R2Score out;
  out.per_row = Vector::Constant(truth.rows(), std::numeric_limits<double>::quiet_NaN());
  out.defined.assign(static_cast<std::size_t>(truth.rows()), false);
  double acc = 0.0;
  int count = 0;
  for (Eigen::Index r = 0; r < truth.rows(); ++r) {
    const double mean = truth.row(r).mean();
    const double ss_tot = (truth.row(r).array() - mean).square().sum();
    if (!(ss_tot > 0.0)) continue;
    const double ss_res = (truth.row(r) - predicted.row(r)).squaredNorm();
    out.per_row(r) = 1.0 - ss_res / ss_tot;
    out.defined[static_cast<std::size_t>(r)] = true;
    acc += out.per_row(r);
    ++count;
  }
  out.mean = count > 0 ? acc / count : std::numeric_limits<double>::quiet_NaN();
  return out;
}

std::vector<std::size_t> hungarian_assignment(const Matrix& cost) {
  if (cost.rows() != cost.cols()) throw ShapeError("assignment needs a square cost matrix");
  const auto n = static_cast<std::size_t>(cost.rows());
  constexpr double inf = std::numeric_limits<double>::infinity();
  // Shortest augmenting path with potentials, 1-based with a virtual column 0.
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
  std::vector<std::size_t> match(n + 1, 0), way(n + 1, 0);
  for (std::size_t row = 1; row <= n; ++row) {
    match[0] = row;
    std::size_t col0 = 0;
    std::vector<double> minv(n + 1, inf);
    std::vector<bool> used(n + 1, false);
    do {
      used[col0] = true;
      const std::size_t r0 = match[col0];
      double delta = inf;
      std::size_t col1 = 0;
      for (std::size_t c = 1; c <= n; ++c) {
        if (used[c]) continue;
        const double cur = cost(static_cast<Eigen::Index>(r0 - 1), static_cast<Eigen::Index>(c - 1)) - u[r0] - v[c];
        if (cur < minv[c]) {
          minv[c] = cur;
          way[c] = col0;
        }
        if (minv[c] < delta) {
          delta = minv[c];
          col1 = c;
        }
      }
      for (std::size_t c = 0; c <= n; ++c) {
        if (used[c]) {
          u[match[c]] += delta;
          v[c] -= delta;
        } else {
          minv[c] -= delta;
        }
      }
      col0 = col1;
    } while (match[col0] != 0);
    do {
      const std::size_t col1 = way[col0];
      match[col0] = match[col1];
      col0 = col1;
    } while (col0 != 0);
  }
  std::vector<std::size_t> out(n);
  for (std::size_t c = 1; c <= n; ++c) out[match[c] - 1] = c - 1;
  return out;
}

ComponentMatch match_components(const Matrix& est, const Matrix& ref) {
  if (est.rows() != ref.rows() || est.cols() != ref.cols()) throw ShapeError("match_components shape mismatch");
  const auto p = est.rows();
  Matrix e = est, r = ref;
  for (Eigen::Index k = 0; k < p; ++k) {
    if (e.row(k).norm() > 0.0) e.row(k).normalize();
    if (r.row(k).norm() > 0.0) r.row(k).normalize();
  }
  Matrix cost(p, p);
  Eigen::MatrixXi sign(p, p);
  for (Eigen::Index a = 0; a < p; ++a) {
    for (Eigen::Index b = 0; b < p; ++b) {
      const double minus = (e.row(a) - r.row(b)).norm();
      const double plus = (e.row(a) + r.row(b)).norm();
      cost(a, b) = std::min(minus, plus);
      sign(a, b) = plus < minus ? -1 : 1;
    }
  }
  const auto ref_for_est = hungarian_assignment(cost);
  ComponentMatch out;
  out.est_for_ref.assign(static_cast<std::size_t>(p), 0);
  out.signs.assign(static_cast<std::size_t>(p), 1);
  out.distances.resize(p);
  for (Eigen::Index a = 0; a < p; ++a) {
    const auto b = static_cast<Eigen::Index>(ref_for_est[static_cast<std::size_t>(a)]);
    out.est_for_ref[static_cast<std::size_t>(b)] = static_cast<std::size_t>(a);
    out.signs[static_cast<std::size_t>(b)] = sign(a, b);
    out.distances(b) = cost(a, b);
  }
  out.total = out.distances.sum();
  return out;
}

}  // namespace shica
