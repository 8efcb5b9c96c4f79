#include "shica/shica_j.hpp"

#include "shica/errors.hpp"

#include <cmath>
#include <numbers>

namespace shica {

double scaling_objective(const BlockCovariance& gamma, const std::vector<Vector>& phi) {
  const std::size_t m = gamma.m();
  if (phi.size() != m) throw ShapeError("one scale vector per view expected");
  double total = 0.0;
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < m; ++j) {
      if (i == j) continue;
      total += (phi[i].cwiseProduct(gamma.block(i, j).diagonal()).cwiseProduct(phi[j]).array() - 1.0).square().sum();
    }
  return total;
}

namespace {

// Scaling objective restricted to one component: y(i, l) = diag(Gamma_il)_k.
double component_scaling_objective(const Matrix& y, const Vector& phi) {
  double total = 0.0;
  for (Eigen::Index i = 0; i < y.rows(); ++i)
    for (Eigen::Index l = 0; l < y.rows(); ++l)
      if (i != l) total += std::pow(phi(i) * y(i, l) * phi(l) - 1.0, 2);
  return total;
}

// One damped Newton step on a component (H + mu I, mu raised until the step descends);
// returns false when no damping level improves the objective.
bool newton_polish(const Matrix& y, Vector& phi) {
  const Eigen::Index m = y.rows();
  Vector g = Vector::Zero(m);
  Matrix H = Matrix::Zero(m, m);
  for (Eigen::Index i = 0; i < m; ++i)
    for (Eigen::Index l = 0; l < m; ++l) {
      if (i == l) continue;
      const double r_il = phi(i) * y(i, l) * phi(l) - 1.0;
      const double r_li = phi(l) * y(l, i) * phi(i) - 1.0;
      const double yy = y(i, l) * y(i, l) + y(l, i) * y(l, i);
      g(i) += 2.0 * (r_il * y(i, l) + r_li * y(l, i)) * phi(l);
      H(i, i) += 2.0 * yy * phi(l) * phi(l);
      H(i, l) = 2.0 * yy * phi(i) * phi(l) + 2.0 * (r_il * y(i, l) + r_li * y(l, i));
    }
  const double f0 = component_scaling_objective(y, phi);
  const double scale = H.diagonal().cwiseAbs().maxCoeff();
  if (!(scale > 0.0) || !std::isfinite(scale)) return false;
  for (double mu = 0.0; mu <= 1e8 * scale; mu = mu == 0.0 ? 1e-10 * scale : 10.0 * mu) {
    Eigen::LLT<Matrix> llt(H + mu * Matrix::Identity(m, m));
    if (llt.info() != Eigen::Success) continue;
    const Vector next = phi - llt.solve(g);
    if (next.allFinite() && component_scaling_objective(y, next) < f0) {
      phi = next;
      return true;
    }
  }
  return false;
}

}  // namespace

ScalingResult scaling_fixed_point(const BlockCovariance& gamma, const ScalingOptions& opts) {
  const std::size_t m = gamma.m();
  const auto p = static_cast<Eigen::Index>(gamma.p());
  if (m < 2) throw DataError("scaling needs at least 2 views");

  std::vector<Vector> y(m * m);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < m; ++j) y[i * m + j] = gamma.block(i, j).diagonal();

  ScalingResult res;
  res.phi.assign(m, Vector::Ones(p));
  res.objective_trace.push_back(scaling_objective(gamma, res.phi));

  for (res.sweeps = 0; res.sweeps < opts.max_iter;) {
    const std::vector<Vector> start = res.phi;
    for (std::size_t i = 0; i < m; ++i) {
      Vector num = Vector::Zero(p);
      Vector den = Vector::Zero(p);
      for (std::size_t j = 0; j < m; ++j) {
        if (j == i) continue;
        const Vector& yij = y[i * m + j];
        const Vector& yji = y[j * m + i];
        const Vector& pj = res.phi[j];
        if (opts.rule == ScalingRule::coordinate_exact) {
          num += (yij + yji).cwiseProduct(pj);
          den += (yij.cwiseAbs2() + yji.cwiseAbs2()).cwiseProduct(pj.cwiseAbs2());
        } else {
          num += pj;
          den += yij.cwiseProduct(pj.cwiseAbs2());
        }
      }
      for (Eigen::Index k = 0; k < p; ++k) {
        if (den(k) == 0.0 || !std::isfinite(den(k))) throw DegenerateScaleError(i, static_cast<std::size_t>(k));
        res.phi[i](k) = num(k) / den(k);
      }
    }
    if (opts.rule == ScalingRule::coordinate_exact && opts.newton) {
      const auto mm = static_cast<Eigen::Index>(m);
      for (Eigen::Index k = 0; k < p; ++k) {
        Matrix yk(mm, mm);
        Vector phik(mm);
        for (Eigen::Index i = 0; i < mm; ++i) {
          phik(i) = res.phi[static_cast<std::size_t>(i)](k);
          for (Eigen::Index l = 0; l < mm; ++l) yk(i, l) = i == l ? 0.0 : y[static_cast<std::size_t>(i * mm + l)](k);
        }
        if (newton_polish(yk, phik))
          for (Eigen::Index i = 0; i < mm; ++i) res.phi[static_cast<std::size_t>(i)](k) = phik(i);
      }
    }
    double max_change = 0.0;
    for (std::size_t i = 0; i < m; ++i)
      max_change = std::max(max_change, ((res.phi[i] - start[i]).array().abs() / start[i].array().abs().max(1e-300)).maxCoeff());
    ++res.sweeps;
    res.objective_trace.push_back(scaling_objective(gamma, res.phi));
    if (max_change < opts.tol) {
      res.converged = true;
      break;
    }
  }
  return res;
}

namespace {

// c(i, l) = (C_il)_kk for one component k.
Matrix component_moments(const BlockCovariance& cov, Eigen::Index k) {
  const auto m = static_cast<Eigen::Index>(cov.m());
  Matrix c(m, m);
  for (Eigen::Index i = 0; i < m; ++i)
    for (Eigen::Index l = 0; l < m; ++l) c(i, l) = cov.block(static_cast<std::size_t>(i), static_cast<std::size_t>(l))(k, k);
  return c;
}

double log_abs_det_sum(const std::vector<Matrix>& unmixing) {
  double acc = 0.0;
  for (const auto& w : unmixing) acc += std::log(std::abs(w.determinant()));
  return acc;
}

}  // namespace

double gaussian_loglik(const BlockCovariance& unmixed_cov, const std::vector<Vector>& noise_vars,
                       const std::vector<Matrix>& unmixing) {
  const auto m = static_cast<Eigen::Index>(unmixed_cov.m());
  const auto p = static_cast<Eigen::Index>(unmixed_cov.p());
  const double log2pi = std::log(2.0 * std::numbers::pi);
  double total = log_abs_det_sum(unmixing);
  for (Eigen::Index k = 0; k < p; ++k) {
    const Matrix c = component_moments(unmixed_cov, k);
    Matrix K = Matrix::Ones(m, m);
    for (Eigen::Index i = 0; i < m; ++i) K(i, i) += noise_vars[static_cast<std::size_t>(i)](k);
    Eigen::LLT<Matrix> llt(K);
    if (llt.info() != Eigen::Success) throw NumericalError("Gaussian model covariance is not positive definite");
    const double logdet = 2.0 * llt.matrixLLT().diagonal().array().log().sum();
    const double quad = llt.solve(c).trace();
    total -= 0.5 * (static_cast<double>(m) * log2pi + logdet + quad);
  }
  return total;
}

EmResult em_gaussian_noise(const BlockCovariance& raw_cov, const std::vector<Matrix>& unmixing, const EmOptions& opts) {
  const std::size_t m = raw_cov.m();
  const auto p = static_cast<Eigen::Index>(raw_cov.p());
  if (unmixing.size() != m) throw ShapeError("one unmixing matrix per view expected");
  const BlockCovariance unmixed = raw_cov.transformed(unmixing);

  std::vector<Matrix> moments;
  moments.reserve(static_cast<std::size_t>(p));
  for (Eigen::Index k = 0; k < p; ++k) moments.push_back(component_moments(unmixed, k));

  EmResult res;
  res.noise_vars.reserve(m);
  for (std::size_t i = 0; i < m; ++i) res.noise_vars.emplace_back(unmixed.block(i, i).diagonal().cwiseMax(opts.init_floor));

  // K = 11^T + diag(Sigma): determinant lemma and Sherman-Morrison give the likelihood from the
  // same precision sums the E-step needs, so each iteration is O(p m^2).
  const double log2pi = std::log(2.0 * std::numbers::pi);
  const double logdet_w = log_abs_det_sum(unmixing);
  const auto mm = static_cast<Eigen::Index>(m);
  Matrix prec(mm, p);
  for (res.iterations = 0; res.iterations < opts.max_iter; ++res.iterations) {
    for (std::size_t i = 0; i < m; ++i) prec.row(static_cast<Eigen::Index>(i)) = res.noise_vars[i].cwiseInverse().transpose();
    double ll = logdet_w;
    std::vector<Vector> next(m, Vector(p));
    for (Eigen::Index k = 0; k < p; ++k) {
      const Matrix& c = moments[static_cast<std::size_t>(k)];
      const Vector pk = prec.col(k);
      const double sum = pk.sum();
      const Vector cross = c * pk;          // sum_j c(i, j) / Sigma_jk
      const double total = pk.dot(cross);   // sum_jl c(j, l) / (Sigma_jk Sigma_lk)
      const double v = 1.0 / (sum + 1.0);  // posterior variance, shared by all samples
      double logdet = std::log1p(sum);
      for (Eigen::Index i = 0; i < mm; ++i) logdet -= std::log(pk(i));
      ll -= 0.5 * (static_cast<double>(m) * log2pi + logdet + c.diagonal().dot(pk) - v * total);
      for (std::size_t i = 0; i < m; ++i) {
        const auto ii = static_cast<Eigen::Index>(i);
        next[i](k) = std::max(c(ii, ii) - 2.0 * v * cross(ii) + v * v * total + v, opts.floor);
      }
    }
    res.loglik_trace.push_back(ll);
    const std::size_t t = res.loglik_trace.size();
    if (t >= 2 && std::abs(ll - res.loglik_trace[t - 2]) <= opts.tol * std::abs(res.loglik_trace[t - 2])) {
      res.converged = true;
      break;
    }
    res.noise_vars = std::move(next);
  }
  return res;
}

SharedPosterior mmse_gaussian(const MultiViewData& unmixed, const std::vector<Vector>& noise_vars) {
  const std::size_t m = unmixed.m();
  if (noise_vars.size() != m) throw ShapeError("one noise vector per view expected");
  const auto p = static_cast<Eigen::Index>(unmixed.p());
  Vector prec = Vector::Ones(p);
  Matrix weighted = Matrix::Zero(p, static_cast<Eigen::Index>(unmixed.n()));
  for (std::size_t i = 0; i < m; ++i) {
    if ((noise_vars[i].array() <= 0.0).any()) throw DataError("noise variances must be positive");
    const Vector inv = noise_vars[i].cwiseInverse();
    prec += inv;
    weighted += inv.asDiagonal() * unmixed.view(i);
  }
  SharedPosterior out;
  out.variance = prec.cwiseInverse();
  out.mean = out.variance.asDiagonal() * weighted;
  return out;
}

std::vector<Matrix> jd_correct(const BlockCovariance& cov, const MccaFit& mcca, const JdOptions& opts, JdResult* jd_out) {
  JdProblem problem;
  problem.mats.reserve(cov.m());
  for (std::size_t i = 0; i < cov.m(); ++i) {
    Matrix k = mcca.unmixing[i] * cov.block(i, i) * mcca.unmixing[i].transpose();
    problem.mats.emplace_back(0.5 * (k + k.transpose()));
  }
  JdResult jd = joint_diagonalize(problem, opts);
  std::vector<Matrix> out;
  out.reserve(cov.m());
  for (const auto& w : mcca.unmixing) out.emplace_back(jd.B * w);
  if (jd_out) *jd_out = std::move(jd);
  return out;
}

void apply_sign_convention(std::vector<Matrix>& unmixing, const MultiViewData* data) {
  if (unmixing.empty()) return;
  const auto p = unmixing.front().rows();
  Matrix avg;
  if (data != nullptr && data->n() >= 3) {
    avg = Matrix::Zero(p, static_cast<Eigen::Index>(data->n()));
    for (std::size_t i = 0; i < unmixing.size(); ++i) avg += unmixing[i] * data->view(i);
    avg /= static_cast<double>(unmixing.size());
  }
  for (Eigen::Index k = 0; k < p; ++k) {
    int sign = 0;
    if (avg.size() > 0) {
      const auto n = static_cast<double>(avg.cols());
      const Eigen::ArrayXd z = avg.row(k).array() - avg.row(k).mean();
      const double m2 = z.square().mean();
      const double skew = m2 > 0.0 ? z.cube().mean() / std::pow(m2, 1.5) : 0.0;
      if (std::abs(skew) > 3.0 * std::sqrt(6.0 / n)) sign = skew > 0.0 ? 1 : -1;
    }
    if (sign == 0) {
      Eigen::Index arg = 0;
      unmixing.front().row(k).cwiseAbs().maxCoeff(&arg);
      sign = unmixing.front()(k, arg) >= 0.0 ? 1 : -1;
    }
    if (sign < 0)
      for (auto& w : unmixing) w.row(k) *= -1.0;
  }
}

namespace {

ShicaJFit fit_from_covariance(const BlockCovariance& cov, const ShicaJOptions& opts, const MultiViewData* data) {
  if (cov.m() < 2) throw DataError("ShICA-J needs at least 2 views (3 for identifiability)");

  ShicaJFit fit;
  const MccaFit mcca = in_stage("mcca", [&] { return fit_mcca(cov); });
  fit.diagnostics.mcca_gap = mcca.gap;
  fit.diagnostics.mcca_eigenvalues = mcca.eigenvalues;
  fit.diagnostics.warnings = mcca.warnings;

  JdResult jd;
  const std::vector<Matrix> rotated = in_stage("jointdiag", [&] { return jd_correct(cov, mcca, opts.jd, &jd); });
  fit.diagnostics.jd_iterations = jd.iterations;
  fit.diagnostics.jd_converged = jd.converged;
  if (!jd.converged) fit.diagnostics.warnings.emplace_back("joint diagonalization did not converge");

  const BlockCovariance gamma = cov.transformed(rotated);
  const ScalingResult scaling = in_stage("scaling", [&] { return scaling_fixed_point(gamma, opts.scaling); });
  fit.diagnostics.scaling_sweeps = scaling.sweeps;
  fit.diagnostics.scaling_converged = scaling.converged;
  if (!scaling.converged) fit.diagnostics.warnings.emplace_back("scaling fixed point did not converge");

  fit.unmixing.reserve(cov.m());
  for (std::size_t i = 0; i < cov.m(); ++i) fit.unmixing.emplace_back(scaling.phi[i].asDiagonal() * rotated[i]);
  apply_sign_convention(fit.unmixing, data);

  if (opts.estimate_noise) {
    EmResult em = in_stage("noise-em", [&] { return em_gaussian_noise(cov, fit.unmixing, opts.em); });
    fit.noise_vars = std::move(em.noise_vars);
    fit.diagnostics.em_loglik_trace = std::move(em.loglik_trace);
  } else {
    fit.noise_vars.assign(cov.m(), Vector::Ones(static_cast<Eigen::Index>(cov.p())));
  }
  return fit;
}

}  // namespace

ShicaJFit fit_shica_j(const BlockCovariance& cov, const ShicaJOptions& opts) { return fit_from_covariance(cov, opts, nullptr); }

ShicaJFit fit_shica_j(const MultiViewData& data, const ShicaJOptions& opts) {
  if (data.n() < data.p()) throw DataError("ShICA-J needs n >= p samples");
  const BlockCovariance cov = sample_covariance(data, opts.centered);
  return fit_from_covariance(cov, opts, &data);
}

}  // namespace shica
