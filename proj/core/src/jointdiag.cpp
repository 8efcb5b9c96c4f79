#include "shica/jointdiag.hpp"

#include "shica/errors.hpp"

#include <cmath>
#include <numeric>

namespace shica {

namespace {

std::vector<double> normalized_weights(const JdProblem& problem) {
  std::vector<double> w = problem.weights;
  if (w.empty()) w.assign(problem.mats.size(), 1.0);
  if (w.size() != problem.mats.size()) throw ShapeError("one weight per matrix expected");
  for (double x : w)
    if (!(x > 0.0) || !std::isfinite(x)) throw DataError("joint-diagonalization weights must be positive");
  return w;
}

void validate(const JdProblem& problem) {
  if (problem.mats.empty()) throw DataError("joint diagonalization needs at least one matrix");
  const auto p = problem.mats.front().rows();
  for (const auto& k : problem.mats) {
    if (k.rows() != p || k.cols() != p) throw ShapeError("joint-diagonalization matrices must share one square size");
    if (!k.allFinite()) throw DataError("non-finite entry in joint-diagonalization input");
    const double asym = (k - k.transpose()).norm();
    if (asym > 1e-10 * std::max(1.0, k.norm())) throw DataError("joint-diagonalization input is not symmetric");
  }
}

Matrix congruence(const Matrix& B, const Matrix& K) {
  Matrix out = B * K * B.transpose();
  return 0.5 * (out + out.transpose());
}

double criterion_of(const std::vector<Matrix>& transformed, const std::vector<double>& w) {
  double total = 0.0;
  for (std::size_t i = 0; i < transformed.size(); ++i) {
    const Matrix& d = transformed[i];
    Eigen::LLT<Matrix> llt(d);
    if (llt.info() != Eigen::Success) throw NumericalError("transformed matrix is not positive definite");
    const double logdet = 2.0 * llt.matrixLLT().diagonal().array().log().sum();
    const double logdiag = d.diagonal().array().log().sum();
    total += w[i] * 0.5 * (logdiag - logdet);
  }
  return total;
}

struct Evaluated {
  std::vector<Matrix> transformed;
  double value = 0.0;
  bool ok = false;
};

Evaluated evaluate(const Matrix& B, const JdProblem& problem, const std::vector<double>& w) {
  Evaluated e;
  e.transformed.reserve(problem.mats.size());
  for (const auto& k : problem.mats) e.transformed.push_back(congruence(B, k));
  try {
    e.value = criterion_of(e.transformed, w);
    e.ok = std::isfinite(e.value);
  } catch (const NumericalError&) {
    e.ok = false;
  }
  return e;
}

// Gradient in the relative parameterization B <- (I + E) B, averaged over matrices.
Matrix relative_gradient(const std::vector<Matrix>& transformed, const std::vector<double>& wbar) {
  const auto p = transformed.front().rows();
  Matrix G = Matrix::Zero(p, p);
  for (std::size_t i = 0; i < transformed.size(); ++i) {
    const Vector diag = transformed[i].diagonal();
    G += wbar[i] * (diag.cwiseInverse().asDiagonal() * transformed[i]);
  }
  G -= Matrix::Identity(p, p);
  return G;
}

// h(a, b) = sum_i wbar_i d_ib / d_ia
Matrix hessian_coefficients(const std::vector<Matrix>& transformed, const std::vector<double>& wbar) {
  const auto p = transformed.front().rows();
  Matrix h = Matrix::Zero(p, p);
  for (std::size_t i = 0; i < transformed.size(); ++i) {
    const Vector d = transformed[i].diagonal();
    h += wbar[i] * (d.cwiseInverse() * d.transpose());
  }
  return h;
}

// Solves [[h_ab, 1], [1, h_ba]] (x_ab, x_ba) = -(G_ab, G_ba), regularizing the
// block to keep it positive definite.
std::pair<double, double> pair_step(double g_ab, double g_ba, double h_ab, double h_ba, double min_curvature) {
  double det = h_ab * h_ba - 1.0;
  if (det < min_curvature) {
    // Shift both diagonal terms until the determinant reaches the floor.
    const double trace = h_ab + h_ba;
    const double shift = 0.5 * (-trace + std::sqrt(trace * trace - 4.0 * (det - min_curvature)));
    h_ab += shift;
    h_ba += shift;
    det = h_ab * h_ba - 1.0;
  }
  return {-(h_ba * g_ab - g_ba) / det, -(h_ab * g_ba - g_ab) / det};
}

}  // namespace

double pham_criterion(const Matrix& B, const JdProblem& problem) {
  validate(problem);
  const auto w = normalized_weights(problem);
  std::vector<Matrix> transformed;
  transformed.reserve(problem.mats.size());
  for (const auto& k : problem.mats) transformed.push_back(congruence(B, k));
  return criterion_of(transformed, w);
}

JdResult joint_diagonalize(const JdProblem& problem, const JdOptions& opts) {
  validate(problem);
  const auto w = normalized_weights(problem);
  const double wsum = std::accumulate(w.begin(), w.end(), 0.0);
  std::vector<double> wbar(w.size());
  for (std::size_t i = 0; i < w.size(); ++i) wbar[i] = w[i] / wsum;

  const auto p = problem.mats.front().rows();
  const Matrix I = Matrix::Identity(p, p);

  JdResult res;
  res.B = I;
  Evaluated cur = evaluate(res.B, problem, w);
  if (!cur.ok) throw NumericalError("joint-diagonalization input is not positive definite");
  res.criterion_trace.push_back(cur.value);

  auto try_direction = [&](const Matrix& E) -> bool {
    double step = 1.0;
    for (int k = 0; k <= opts.max_halvings; ++k, step *= 0.5) {
      Matrix Bn = (I + step * E) * res.B;
      Evaluated cand = evaluate(Bn, problem, w);
      if (cand.ok && cand.value < cur.value) {
        res.B = std::move(Bn);
        cur = std::move(cand);
        return true;
      }
    }
    return false;
  };

  for (res.iterations = 0; res.iterations < opts.max_iter; ++res.iterations) {
    const Matrix G = relative_gradient(cur.transformed, wbar);
    if (G.norm() < opts.tol) {
      res.converged = true;
      break;
    }
    const Matrix h = hessian_coefficients(cur.transformed, wbar);
    Matrix E = Matrix::Zero(p, p);
    for (Eigen::Index a = 0; a < p; ++a) {
      for (Eigen::Index b = a + 1; b < p; ++b) {
        const auto [x_ab, x_ba] = pair_step(G(a, b), G(b, a), h(a, b), h(b, a), opts.min_curvature);
        E(a, b) = x_ab;
        E(b, a) = x_ba;
      }
    }

    const double before = cur.value;
    bool moved = try_direction(E);
    if (!moved) {
      // Pairwise sweep: one plane at a time, recomputing the local model.
      ++res.fallback_sweeps;
      for (Eigen::Index a = 0; a < p; ++a) {
        for (Eigen::Index b = a + 1; b < p; ++b) {
          const Matrix Gp = relative_gradient(cur.transformed, wbar);
          const Matrix hp = hessian_coefficients(cur.transformed, wbar);
          const auto [x_ab, x_ba] = pair_step(Gp(a, b), Gp(b, a), hp(a, b), hp(b, a), opts.min_curvature);
          Matrix Ep = Matrix::Zero(p, p);
          Ep(a, b) = x_ab;
          Ep(b, a) = x_ba;
          moved = try_direction(Ep) || moved;
        }
      }
    }
    if (!moved) {
      res.converged = relative_gradient(cur.transformed, wbar).norm() < opts.tol;
      break;
    }
    res.criterion_trace.push_back(cur.value);
    if ((before - cur.value) <= opts.tol * std::abs(before)) {
      res.converged = true;
      ++res.iterations;
      break;
    }
  }
  return res;
}

}  // namespace shica
