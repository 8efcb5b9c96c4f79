#include "shica/shica_ml.hpp"

#include "shica/errors.hpp"
#include "shica/rng.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace shica {

namespace {

constexpr double kResponsibilityFloor = 1e-300;
const double kLog2Pi = std::log(2.0 * std::numbers::pi);

struct Estep {
  MixturePosterior post;
  double loglik = 0.0;  // per sample, without the log|det W_i| terms
  Vector see;           // mean_t E_j^2
  Vector vbar;          // mean_t V_j
};

void check_noise(const std::vector<Vector>& noise_vars, std::size_t m, Eigen::Index p) {
  if (noise_vars.size() != m) throw ShapeError("one noise vector per view expected");
  for (const auto& v : noise_vars) {
    if (v.size() != p) throw ShapeError("noise vector has wrong length");
    if ((v.array() <= 0.0).any()) throw DataError("noise variances must be positive");
  }
}

// Fills `out`, reusing its storage when the shapes already match.
void estep_into(const std::vector<Matrix>& y, const std::vector<Vector>& noise_vars, bool want_loglik, Estep& out) {
  const std::size_t m = y.size();
  const Eigen::Index p = y.front().rows();
  const Eigen::Index n = y.front().cols();
  check_noise(noise_vars, m, p);

  // Per-component constants.
  Matrix weight(p, static_cast<Eigen::Index>(m));  // Sigma_bar_j / Sigma_ij
  Matrix inv_noise(p, static_cast<Eigen::Index>(m));
  Vector sbar(p), c1(p), c2(p), h1(p), h2(p), k1(p), k2(p), v1(p), v2(p);
  const double a1 = kMixtureVariances[0];
  const double a2 = kMixtureVariances[1];
  double const_terms = 0.0;
  for (Eigen::Index j = 0; j < p; ++j) {
    double prec = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
      inv_noise(j, static_cast<Eigen::Index>(i)) = 1.0 / noise_vars[i](j);
      prec += inv_noise(j, static_cast<Eigen::Index>(i));
      const_terms -= 0.5 * (kLog2Pi + std::log(noise_vars[i](j)));
    }
    sbar(j) = 1.0 / prec;
    const_terms += 0.5 * (kLog2Pi + std::log(sbar(j))) + std::log(0.5);
    weight.row(j) = inv_noise.row(j) * sbar(j);
    const double var1 = sbar(j) + a1;
    const double var2 = sbar(j) + a2;
    c1(j) = -0.5 * (kLog2Pi + std::log(var1));
    c2(j) = -0.5 * (kLog2Pi + std::log(var2));
    h1(j) = 0.5 / var1;
    h2(j) = 0.5 / var2;
    k1(j) = a1 / var1;  // mu_alpha = k_alpha ybar
    k2(j) = a2 / var2;
    v1(j) = sbar(j) * a1 / var1;
    v2(j) = sbar(j) * a2 / var2;
  }

  auto& post = out.post;
  post.mean.resize(p, n);
  post.variance.resize(p, n);
  post.responsibilities[0].resize(p, n);
  post.responsibilities[1].resize(p, n);
  std::vector<const double*> ys(m);
  for (std::size_t i = 0; i < m; ++i) ys[i] = y[i].data();

  double acc = 0.0;
  out.see.setZero(p);
  out.vbar.setZero(p);
  for (Eigen::Index t = 0; t < n; ++t) {
    for (Eigen::Index j = 0; j < p; ++j) {
      const Eigen::Index idx = t * p + j;
      double ybar = 0.0;
      for (std::size_t i = 0; i < m; ++i) ybar += weight(j, static_cast<Eigen::Index>(i)) * ys[i][idx];
      const double b2 = ybar * ybar;
      // log theta_alpha = log N(ybar; 0, sbar + alpha)
      const double l1 = c1(j) - b2 * h1(j);
      const double l2 = c2(j) - b2 * h2(j);
      const double e = std::exp(std::clamp(l2 - l1, -700.0, 700.0));
      const double r1 = 1.0 / (1.0 + e);
      const double r2 = e * r1;
      const double dk = ybar * (k1(j) - k2(j));
      const double mean = (r1 * k1(j) + r2 * k2(j)) * ybar;
      // Law of total variance for the two-component posterior.
      const double var = r1 * v1(j) + r2 * v2(j) + r1 * r2 * dk * dk;
      post.mean(j, t) = mean;
      out.see(j) += mean * mean;
      out.vbar(j) += var;
      post.variance(j, t) = var;
      post.responsibilities[0](j, t) = std::clamp(r1, kResponsibilityFloor, 1.0);
      post.responsibilities[1](j, t) = std::clamp(r2, kResponsibilityFloor, 1.0);
      if (want_loglik) {
        // sum_i log N(y_ij; ybar_j, S_ij) + log sum_alpha N(ybar_j; 0, sbar_j + alpha), constants added below
        double q = 0.0;
        for (std::size_t i = 0; i < m; ++i) {
          const double d = ys[i][idx] - ybar;
          q += d * d * inv_noise(j, static_cast<Eigen::Index>(i));
        }
        acc += l1 - std::log(r1) - 0.5 * q;
      }
    }
  }
  out.see /= static_cast<double>(n);
  out.vbar /= static_cast<double>(n);
  out.loglik = want_loglik ? acc / static_cast<double>(n) + const_terms : 0.0;
}

Estep estep_impl(const std::vector<Matrix>& y, const std::vector<Vector>& noise_vars, bool want_loglik) {
  Estep out;
  estep_into(y, noise_vars, want_loglik, out);
  return out;
}

double log_abs_det_sum(const std::vector<Matrix>& unmixing) {
  double acc = 0.0;
  for (const auto& w : unmixing) acc += std::log(std::abs(w.determinant()));
  return acc;
}

// Sample moments that determine the surrogate along W <- T W.
struct ViewMoments {
  Matrix syy;    // y y^T / n
  Matrix sye;    // y E^T / n, sye(b, a) = mean(y_b E_a)
  Vector see;    // mean(E_a^2)
  Vector vbar;   // mean(V_a)
};

ViewMoments view_moments(const Matrix& y, const Estep& est) {
  const double n = static_cast<double>(y.cols());
  ViewMoments mo;
  mo.syy.noalias() = y * y.transpose();
  mo.syy /= n;
  mo.sye.noalias() = y * est.post.mean.transpose();
  mo.sye /= n;
  mo.see = est.see;
  mo.vbar = est.vbar;
  return mo;
}

ViewMoments view_moments(const Matrix& y, const MixturePosterior& post) {
  Estep est;
  est.post = post;
  est.see = post.mean.rowwise().squaredNorm() / static_cast<double>(y.cols());
  est.vbar = post.variance.rowwise().mean();
  return view_moments(y, est);
}

// mean_t (y_a - E_a)^2 + V_a from the moments.
Vector noise_from_moments(const ViewMoments& mo, double floor) {
  return (mo.syy.diagonal() - 2.0 * mo.sye.diagonal() + mo.see + mo.vbar).cwiseMax(floor);
}

// Surrogate at W' = T W given the moments of y = W x.
double surrogate_from_moments(double log_abs_det_w, const Matrix& T, const ViewMoments& mo, const Vector& noise) {
  const auto p = T.rows();
  double quad = 0.0;
  const Matrix tsyy = T * mo.syy;
  for (Eigen::Index a = 0; a < p; ++a) {
    const double resid = tsyy.row(a).dot(T.row(a)) - 2.0 * T.row(a).dot(mo.sye.col(a)) + mo.see(a);
    quad += (resid + mo.vbar(a)) / noise(a);
  }
  return -log_abs_det_w + 0.5 * quad;
}

Matrix gradient_from_moments(const ViewMoments& mo, const Vector& noise) {
  const auto p = mo.syy.rows();
  return noise.cwiseInverse().asDiagonal() * (mo.syy - mo.sye.transpose()) - Matrix::Identity(p, p);
}

HessianApprox hessian_from_moments(const ViewMoments& mo, const Vector& noise) {
  return {noise.cwiseInverse() * mo.syy.diagonal().transpose()};
}

struct LineSearch {
  Matrix T;
  double rho = 0.0;
  bool ok = false;
};

LineSearch backtrack(const Matrix& W, const Matrix& D, const ViewMoments& mo, const Vector& noise, int max_halvings) {
  const auto p = W.rows();
  const Matrix I = Matrix::Identity(p, p);
  const double logdet = std::log(std::abs(W.determinant()));
  const double f0 = surrogate_from_moments(logdet, I, mo, noise);
  double rho = 1.0;
  for (int k = 0; k <= max_halvings; ++k, rho *= 0.5) {
    Matrix T = I - rho * D;
    const double det_t = T.determinant();
    if (!(std::abs(det_t) > 0.0) || !std::isfinite(det_t)) continue;
    const double f = surrogate_from_moments(logdet + std::log(std::abs(det_t)), T, mo, noise);
    if (std::isfinite(f) && f < f0) return {std::move(T), rho, true};
  }
  return {I, 0.0, false};
}

// Fit state working on the stacked samples X (mp x n) and their second moment
// C = X X^T / n, so y_i = W_i X_i is never materialized: quadratic moments of y
// come from W_i C_ik W_k^T and only ybar = sum_i diag(w_i) W_i X_i and the
// cross-moment X E^T / n touch the samples.
struct Engine {
  std::size_t m = 0;
  Eigen::Index p = 0;
  Eigen::Index n = 0;
  Matrix X;
  Matrix C;
  std::vector<Matrix> W;
  std::vector<Vector> noise;
  Matrix ybarT;  // n x p
  Matrix meanT;  // n x p, E[s | x]
  Matrix F;     // X E^T / n, mp x p
  Vector see;
  Vector vbar;

  Engine(const MultiViewData& x, std::vector<Matrix> w, std::vector<Vector> s)
      : m(x.m()), p(static_cast<Eigen::Index>(x.p())), n(static_cast<Eigen::Index>(x.n())), W(std::move(w)), noise(std::move(s)) {
    if (W.size() != m) throw ShapeError("unmixing count does not match view count");
    for (const auto& wi : W)
      if (wi.rows() != p || wi.cols() != p) throw ShapeError("unmixing matrix has wrong shape");
    check_noise(noise, m, p);
    X.resize(static_cast<Eigen::Index>(m) * p, n);
    for (std::size_t i = 0; i < m; ++i) X.middleRows(static_cast<Eigen::Index>(i) * p, p) = x.view(i);
    C.setZero(X.rows(), X.rows());
    C.selfadjointView<Eigen::Lower>().rankUpdate(X, 1.0 / static_cast<double>(n));
    C = C.selfadjointView<Eigen::Lower>();
  }

  Eigen::Index off(std::size_t i) const { return static_cast<Eigen::Index>(i) * p; }
  Matrix cov(std::size_t i, std::size_t k) const { return W[i] * C.block(off(i), off(k), p, p) * W[k].transpose(); }

  // E-step; returns the observed log-likelihood per sample at the current parameters.
  double estep() {
    Matrix weight(p, static_cast<Eigen::Index>(m));  // Sigma_bar_j / Sigma_ij
    Vector sbar = Vector::Zero(p);
    for (std::size_t i = 0; i < m; ++i) sbar += noise[i].cwiseInverse();
    sbar = sbar.cwiseInverse();
    Matrix mbar(p, X.rows());
    for (std::size_t i = 0; i < m; ++i) {
      weight.col(static_cast<Eigen::Index>(i)) = sbar.cwiseQuotient(noise[i]);
      mbar.middleCols(off(i), p) = weight.col(static_cast<Eigen::Index>(i)).asDiagonal() * W[i];
    }
    ybarT.resize(n, p);
    ybarT.noalias() = X.transpose() * mbar.transpose();

    const double a1 = kMixtureVariances[0];
    const double a2 = kMixtureVariances[1];
    Vector c1(p), c2(p), h1(p), h2(p), k1(p), k2(p), v1(p), v2(p);
    double const_terms = 0.0;
    for (Eigen::Index j = 0; j < p; ++j) {
      for (std::size_t i = 0; i < m; ++i) const_terms -= 0.5 * (kLog2Pi + std::log(noise[i](j)));
      const_terms += 0.5 * (kLog2Pi + std::log(sbar(j))) + std::log(0.5);
      const double var1 = sbar(j) + a1;
      const double var2 = sbar(j) + a2;
      c1(j) = -0.5 * (kLog2Pi + std::log(var1));
      c2(j) = -0.5 * (kLog2Pi + std::log(var2));
      h1(j) = 0.5 / var1;
      h2(j) = 0.5 / var2;
      k1(j) = a1 / var1;
      k2(j) = a2 / var2;
      v1(j) = sbar(j) * a1 / var1;
      v2(j) = sbar(j) * a2 / var2;
    }

    // Column-major n x p layout so every component is a contiguous, vectorizable array.
    meanT.resize(n, p);
    see.setZero(p);
    vbar.setZero(p);
    Vector sbb(p);  // mean ybar^2
    double acc = 0.0;
    for (Eigen::Index j = 0; j < p; ++j) {
      const auto yb = ybarT.col(j).array();
      const Eigen::ArrayXd b2 = yb.square();
      const Eigen::ArrayXd e = ((c2(j) - c1(j)) - b2 * (h2(j) - h1(j))).cwiseMax(-700.0).cwiseMin(700.0).exp();
      const Eigen::ArrayXd r1 = (1.0 + e).inverse();
      const Eigen::ArrayXd r2 = e * r1;
      auto mu = meanT.col(j).array();
      mu = (r1 * k1(j) + r2 * k2(j)) * yb;
      see(j) = mu.square().sum();
      const double dk = k1(j) - k2(j);
      vbar(j) = (r1 * v1(j) + r2 * v2(j) + r1 * r2 * b2 * (dk * dk)).sum();
      sbb(j) = b2.sum();
      // log sum_alpha theta_alpha = l1 - log r1 = l1 + log(1 + e)
      acc += n * c1(j) - h1(j) * sbb(j) + (1.0 + e).log().sum();
    }
    const double inv_n = 1.0 / static_cast<double>(n);
    see *= inv_n;
    vbar *= inv_n;
    sbb *= inv_n;

    // -1/2 sum_ij mean_t (y_ij - ybar_j)^2 / Sigma_ij from the second moments.
    double resid = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
      Vector cross = Vector::Zero(p);  // mean_t y_ij ybar_j
      Vector own;
      for (std::size_t k = 0; k < m; ++k) {
        const Vector d = cov(i, k).diagonal();
        if (k == i) own = d;
        cross += weight.col(static_cast<Eigen::Index>(k)).cwiseProduct(d);
      }
      resid += ((own - 2.0 * cross + sbb).array() / noise[i].array()).sum();
    }

    F.resize(X.rows(), p);
    F.noalias() = X * meanT;
    F *= inv_n;
    return acc * inv_n + const_terms - 0.5 * resid + log_abs_det_sum(W);
  }

  // M-step for every view; returns the number of stalled W searches.
  int mstep(const MlOptions& opts) {
    int stalls = 0;
    for (std::size_t i = 0; i < m; ++i) {
      ViewMoments mo;
      mo.syy = cov(i, i);
      mo.sye = W[i] * F.middleRows(off(i), p);
      mo.see = see;
      mo.vbar = vbar;
      noise[i] = noise_from_moments(mo, opts.noise_floor);
      const Matrix G = gradient_from_moments(mo, noise[i]);
      if (G.norm() == 0.0) continue;
      const Matrix D = newton_direction(G, hessian_from_moments(mo, noise[i]), opts.min_curvature);
      const LineSearch ls = backtrack(W[i], D, mo, noise[i], opts.max_halvings);
      if (!ls.ok) {
        ++stalls;
        continue;
      }
      W[i] = ls.T * W[i];
    }
    return stalls;
  }
};

}  // namespace

ScalarPosterior mixture_posterior(double ybar, double sigma_bar) {
  const std::vector<Matrix> y = {Matrix::Constant(1, 1, ybar)};
  const std::vector<Vector> noise = {Vector::Constant(1, sigma_bar)};
  const Estep e = estep_impl(y, noise, false);
  return {e.post.mean(0, 0), e.post.variance(0, 0), {e.post.responsibilities[0](0, 0), e.post.responsibilities[1](0, 0)}};
}

MixturePosterior estep_ml(const MultiViewData& unmixed, const std::vector<Vector>& noise_vars) {
  if (unmixed.m() == 0) throw DataError("no views");
  return estep_impl(unmixed.views(), noise_vars, false).post;
}

std::vector<Vector> noise_mstep_ml(const MultiViewData& unmixed, const MixturePosterior& post, double floor) {
  std::vector<Vector> out;
  out.reserve(unmixed.m());
  const double n = static_cast<double>(unmixed.n());
  for (const auto& y : unmixed.views()) {
    if (y.rows() != post.mean.rows() || y.cols() != post.mean.cols()) throw ShapeError("posterior does not match data");
    out.emplace_back(((y - post.mean).rowwise().squaredNorm() / n + post.variance.rowwise().mean()).cwiseMax(floor));
  }
  return out;
}

Matrix w_gradient(const Matrix& y_i, const MixturePosterior& post, const Vector& noise_i) {
  if (y_i.rows() != post.mean.rows() || y_i.cols() != post.mean.cols()) throw ShapeError("posterior does not match data");
  const auto p = y_i.rows();
  return noise_i.cwiseInverse().asDiagonal() * ((y_i - post.mean) * y_i.transpose()) / static_cast<double>(y_i.cols()) -
         Matrix::Identity(p, p);
}

HessianApprox hessian_approx(const Matrix& y_i, const Vector& noise_i) {
  const Vector second = y_i.rowwise().squaredNorm() / static_cast<double>(y_i.cols());
  return {noise_i.cwiseInverse() * second.transpose()};
}

Matrix apply_hessian(const HessianApprox& h, const Matrix& eps) {
  return eps.transpose() + h.coef.cwiseProduct(eps);
}

Matrix newton_direction(const Matrix& G, const HessianApprox& h, double min_curvature) {
  const auto p = G.rows();
  Matrix D(p, p);
  for (Eigen::Index a = 0; a < p; ++a) {
    D(a, a) = G(a, a) / (1.0 + h.coef(a, a));
    for (Eigen::Index b = a + 1; b < p; ++b) {
      double hab = h.coef(a, b);
      double hba = h.coef(b, a);
      double det = hab * hba - 1.0;
      if (det < min_curvature) {
        const double tr = hab + hba;
        const double shift = 0.5 * (-tr + std::sqrt(tr * tr - 4.0 * (det - min_curvature)));
        hab += shift;
        hba += shift;
        det = hab * hba - 1.0;
      }
      D(a, b) = (hba * G(a, b) - G(b, a)) / det;
      D(b, a) = (hab * G(b, a) - G(a, b)) / det;
    }
  }
  return D;
}

double surrogate_objective(const Matrix& W_i, const Matrix& y_i, const MixturePosterior& post, const Vector& noise_i) {
  const double n = static_cast<double>(y_i.cols());
  const Vector resid = (y_i - post.mean).rowwise().squaredNorm() / n + post.variance.rowwise().mean();
  return -std::log(std::abs(W_i.determinant())) + 0.5 * resid.cwiseQuotient(noise_i).sum();
}

WUpdate w_update(const Matrix& W_i, const Matrix& G, const Matrix& y_i, const MixturePosterior& post, const Vector& noise_i,
                 int max_halvings) {
  WUpdate out{W_i, y_i, 0.0, false};
  if (G.norm() == 0.0) return out;
  const ViewMoments mo = view_moments(y_i, post);
  const Matrix D = newton_direction(G, hessian_from_moments(mo, noise_i));
  LineSearch ls = backtrack(W_i, D, mo, noise_i, max_halvings);
  if (!ls.ok) {
    out.stalled = true;
    return out;
  }
  out.W = ls.T * W_i;
  out.y = ls.T * y_i;
  out.rho = ls.rho;
  return out;
}

double ml_observed_loglik(const MultiViewData& x, const std::vector<Matrix>& unmixing, const std::vector<Vector>& noise_vars) {
  const MultiViewData y = x.transformed(unmixing);
  return estep_impl(y.views(), noise_vars, true).loglik + log_abs_det_sum(unmixing);
}

MlState ml_iteration(const MultiViewData& x, MlState state, const MlOptions& opts) {
  Engine e(x, std::move(state.unmixing), std::move(state.noise_vars));
  const double ll = e.estep();
  if (!state.loglik_trace.empty() && ll < state.loglik_trace.back() - 1e-8) ++state.monotonicity_violations;
  state.loglik_trace.push_back(ll);
  state.stalls += e.mstep(opts);
  state.unmixing = std::move(e.W);
  state.noise_vars = std::move(e.noise);
  ++state.iterations;
  return state;
}

MlState fit_shica_ml(const MultiViewData& data, const MlInit& init, const MlOptions& opts) {
  if (data.m() < 2) throw DataError("ShICA-ML needs at least 2 views (3 for identifiability)");
  const MultiViewData x = opts.centered ? data.centered() : data;
  const auto p = static_cast<Eigen::Index>(x.p());

  std::vector<Matrix> W;
  std::vector<Vector> noise;
  switch (init.kind) {
    case MlInitKind::shica_j: {
      ShicaJOptions jopts = opts.init_options;
      jopts.centered = false;
      ShicaJFit j = in_stage("shica-j-init", [&] { return fit_shica_j(x, jopts); });
      W = std::move(j.unmixing);
      noise = std::move(j.noise_vars);
      break;
    }
    case MlInitKind::given:
      if (init.unmixing.size() != x.m()) throw ShapeError("initial unmixing count does not match view count");
      W = init.unmixing;
      noise = init.noise_vars.empty() ? std::vector<Vector>(x.m(), Vector::Ones(p)) : init.noise_vars;
      break;
    case MlInitKind::random: {
      CounterRng rng(init.seed, 0x4D4C494E4954ULL);
      for (std::size_t i = 0; i < x.m(); ++i) {
        Matrix w(p, p);
        do {
          for (Eigen::Index c = 0; c < p; ++c)
            for (Eigen::Index r = 0; r < p; ++r) w(r, c) = rng.normal();
        } while (!(std::abs(w.determinant()) > 1e-3));
        W.push_back(std::move(w));
      }
      noise.assign(x.m(), Vector::Ones(p));
      break;
    }
  }
  for (auto& v : noise) v = v.cwiseMax(opts.noise_floor);
  Engine e(x, std::move(W), std::move(noise));

  MlState state;
  try {
  for (state.iterations = 0; state.iterations < opts.max_iter; ++state.iterations) {
    const double ll = e.estep();
    if (!state.loglik_trace.empty()) {
      const double prev = state.loglik_trace.back();
      if (ll < prev - 1e-8) ++state.monotonicity_violations;
      state.loglik_trace.push_back(ll);
      if (std::abs(ll - prev) <= opts.tol * std::abs(prev)) {
        state.converged = true;
        break;
      }
    } else {
      state.loglik_trace.push_back(ll);
    }
    state.stalls += e.mstep(opts);
  }
  } catch (NumericalError& err) {
    err.set_stage("shica-ml");
    throw;
  }
  state.unmixing = std::move(e.W);
  state.noise_vars = std::move(e.noise);
  return state;
}

}  // namespace shica
