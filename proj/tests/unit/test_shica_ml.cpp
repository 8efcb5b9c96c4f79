#include "support.hpp"

#include "shica/errors.hpp"
#include "shica/experiments.hpp"
#include "shica/metrics.hpp"
#include "shica/shica_ml.hpp"
#include "shica/synth.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

namespace shica {
namespace {

double normal_pdf(double x, double var) { return std::exp(-0.5 * x * x / var) / std::sqrt(2.0 * std::numbers::pi * var); }

// Posterior moments of s given ybar by trapezoid quadrature of the exact density.
std::array<double, 2> quadrature_moments(double ybar, double sbar, int points = 10001) {
  const double lo = -12.0, hi = 12.0, h = (hi - lo) / (points - 1);
  double z = 0.0, m1 = 0.0, m2 = 0.0;
  for (int k = 0; k < points; ++k) {
    const double s = lo + h * k;
    const double w = (k == 0 || k == points - 1 ? 0.5 : 1.0) * normal_pdf(ybar - s, sbar) * 0.5 * (normal_pdf(s, 0.5) + normal_pdf(s, 1.5));
    z += w;
    m1 += w * s;
    m2 += w * s * s;
  }
  const double mean = m1 / z;
  return {mean, m2 / z - mean * mean};
}

MixturePosterior posterior_for(const Matrix& mean, const Matrix& var) {
  MixturePosterior post;
  post.mean = mean;
  post.variance = var;
  post.responsibilities = {Matrix::Constant(mean.rows(), mean.cols(), 0.5), Matrix::Constant(mean.rows(), mean.cols(), 0.5)};
  return post;
}

TEST(MixturePosterior, SymmetricAtZero) {
  const ScalarPosterior p = mixture_posterior(0.0, 0.7);
  EXPECT_EQ(p.mean, 0.0);
  EXPECT_GT(p.variance, 0.0);
}

TEST(MixturePosterior, DataDominatesAsNoiseVanishes) {
  EXPECT_NEAR(mixture_posterior(1.3, 1e-10).mean, 1.3, 1e-9);
  EXPECT_NEAR(mixture_posterior(-0.4, 1e-10).variance, 1e-10, 1e-15);
}

TEST(MixturePosterior, MatchesQuadrature) {
  const auto q = quadrature_moments(1.0, 0.5);
  const ScalarPosterior p = mixture_posterior(1.0, 0.5);
  EXPECT_NEAR(p.mean, q[0], 1e-8);
  EXPECT_NEAR(p.variance, q[1], 1e-8);
  EXPECT_NEAR(p.responsibilities[0] + p.responsibilities[1], 1.0, 1e-15);
}

TEST(MixturePosterior, StableForExtremeInputs) {
  for (double ybar : {-1e4, -50.0, 50.0, 1e4}) {
    const ScalarPosterior p = mixture_posterior(ybar, 0.3);
    EXPECT_TRUE(std::isfinite(p.mean));
    EXPECT_GT(p.variance, 0.0);
    EXPECT_NEAR(p.mean, ybar * 1.5 / 1.8, 1e-9 * std::abs(ybar));
  }
}

TEST(EstepMl, ResponsibilitiesAndShapes) {
  CounterRng rng(70);
  std::vector<Matrix> y;
  std::vector<Vector> noise;
  for (int i = 0; i < 3; ++i) {
    y.push_back(test::gaussian_matrix(rng, 2, 50));
    noise.push_back(test::uniform_vector(rng, 2, 0.1, 2.0));
  }
  const MixturePosterior post = estep_ml(MultiViewData(y), noise);
  ASSERT_EQ(post.mean.rows(), 2);
  ASSERT_EQ(post.mean.cols(), 50);
  EXPECT_LT((post.responsibilities[0] + post.responsibilities[1] - Matrix::Ones(2, 50)).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_TRUE((post.variance.array() > 0.0).all());
  // per sample, the statistics depend on the views only through the precision-weighted mean
  for (Eigen::Index j = 0; j < 2; ++j) {
    double prec = 0.0, acc = 0.0;
    for (int i = 0; i < 3; ++i) prec += 1.0 / noise[static_cast<std::size_t>(i)](j);
    for (int i = 0; i < 3; ++i) acc += y[static_cast<std::size_t>(i)](j, 7) / noise[static_cast<std::size_t>(i)](j);
    const ScalarPosterior s = mixture_posterior(acc / prec, 1.0 / prec);
    EXPECT_NEAR(post.mean(j, 7), s.mean, 1e-13);
    EXPECT_NEAR(post.variance(j, 7), s.variance, 1e-13);
  }
  EXPECT_THROW(estep_ml(MultiViewData(y), {noise[0], noise[1], Vector::Zero(2)}), DataError);
}

TEST(NoiseMstep, ExactResidualGivesPosteriorVariance) {
  CounterRng rng(71);
  const Matrix y = test::gaussian_matrix(rng, 3, 40);
  const auto post = posterior_for(y, Matrix::Constant(3, 40, 0.25));
  const auto out = noise_mstep_ml(MultiViewData({y, y}), post);
  for (const auto& v : out) EXPECT_TRUE(v.isApprox(Vector::Constant(3, 0.25), 1e-14));
  const auto floored = noise_mstep_ml(MultiViewData({y}), posterior_for(y, Matrix::Zero(3, 40)));
  EXPECT_TRUE(floored[0].isApprox(Vector::Constant(3, 1e-8)));
}

TEST(NoiseMstep, GrowsWithResidual) {
  CounterRng rng(72);
  const Matrix e = test::gaussian_matrix(rng, 2, 30);
  const Matrix r = test::gaussian_matrix(rng, 2, 30);
  const auto post = posterior_for(e, Matrix::Constant(2, 30, 0.1));
  double prev = -1.0;
  for (double scale : {0.0, 0.5, 1.0, 2.0}) {
    const auto v = noise_mstep_ml(MultiViewData({Matrix(e + scale * r)}), post)[0];
    EXPECT_GT(v(0), prev);
    prev = v(0);
  }
}

TEST(WGradient, ResidualFreeIsMinusIdentity) {
  CounterRng rng(73);
  const Matrix y = test::gaussian_matrix(rng, 3, 20);
  EXPECT_TRUE(w_gradient(y, posterior_for(y, Matrix::Ones(3, 20)), Vector::Ones(3)).isApprox(-Matrix::Identity(3, 3)));
}

TEST(WGradient, StructuralIdentity) {
  CounterRng rng(74);
  const Matrix y = test::gaussian_matrix(rng, 3, 25);
  const Matrix e = test::gaussian_matrix(rng, 3, 25);
  const Vector noise = test::uniform_vector(rng, 3, 0.2, 2.0);
  const Matrix R = (y - e) * y.transpose() / 25.0;
  const Matrix G = w_gradient(y, posterior_for(e, Matrix::Ones(3, 25)), noise);
  EXPECT_LT((G - (-Matrix::Identity(3, 3) + noise.cwiseInverse().asDiagonal() * R)).norm(), 1e-13);
}

TEST(WGradient, MatchesFiniteDifferences) {
  CounterRng rng(75);
  const Eigen::Index p = 4, n = 200;
  const Matrix W = test::invertible_matrix(rng, p);
  const Matrix y = test::gaussian_matrix(rng, p, n);
  const Vector noise = test::uniform_vector(rng, p, 0.2, 2.0);
  const MixturePosterior post = estep_ml(MultiViewData({y, Matrix(y + 0.3 * test::gaussian_matrix(rng, p, n))}), {noise, noise});
  const Matrix G = w_gradient(y, post, noise);
  auto objective = [&](const Matrix& eps) {
    const Matrix T = Matrix::Identity(p, p) + eps;
    return surrogate_objective(T * W, T * y, post, noise);
  };
  for (int dir = 0; dir < 5; ++dir) {
    const Matrix E = test::gaussian_matrix(rng, p, p);
    const double h = 1e-6;
    const double fd = (objective(h * E) - objective(-h * E)) / (2.0 * h);
    const double analytic = (G.array() * E.array()).sum();
    EXPECT_NEAR(fd, analytic, 1e-4 * std::abs(analytic));
  }
}

TEST(NewtonDirection, ExactSolveOnWellConditionedBlocks) {
  CounterRng rng(76);
  const Eigen::Index p = 5;
  const Matrix y = 3.0 * test::gaussian_matrix(rng, p, 400);
  const Vector noise = test::uniform_vector(rng, p, 0.1, 0.5);
  const HessianApprox h = hessian_approx(y, noise);
  for (Eigen::Index a = 0; a < p; ++a)
    for (Eigen::Index b = a + 1; b < p; ++b) ASSERT_GT(h.coef(a, b) * h.coef(b, a) - 1.0, 1e-4);
  const Matrix G = test::gaussian_matrix(rng, p, p);
  const Matrix D = newton_direction(G, h);
  EXPECT_LT((apply_hessian(h, D) - G).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(NewtonDirection, WhitenedCaseMatchesExplicitInverse) {
  const Eigen::Index p = 3;
  HessianApprox h{Matrix::Ones(p, p)};
  Matrix G(p, p);
  G << 0.3, -1.0, 2.0, 0.5, -0.7, 1.1, -0.2, 0.9, 0.4;
  const Matrix D = newton_direction(G, h, 1e-4);
  // [[1+c, 1], [1, 1+c]] with (1+c)^2 - 1 = 1e-4
  const double d = std::sqrt(1.0 + 1e-4);
  Matrix block(2, 2);
  block << d, 1.0, 1.0, d;
  const Matrix inv = block.inverse();
  for (Eigen::Index a = 0; a < p; ++a) {
    EXPECT_NEAR(D(a, a), G(a, a) / 2.0, 1e-14);
    for (Eigen::Index b = a + 1; b < p; ++b) {
      const Vector rhs = (Vector(2) << G(a, b), G(b, a)).finished();
      const Vector sol = inv * rhs;
      EXPECT_NEAR(D(a, b), sol(0), 1e-9 * std::abs(sol(0)));
      EXPECT_NEAR(D(b, a), sol(1), 1e-9 * std::abs(sol(1)));
    }
  }
}

TEST(WUpdate, ZeroGradientKeepsW) {
  CounterRng rng(77);
  const Matrix W = test::invertible_matrix(rng, 3);
  const Matrix y = test::gaussian_matrix(rng, 3, 10);
  const WUpdate u = w_update(W, Matrix::Zero(3, 3), y, posterior_for(y, Matrix::Ones(3, 10)), Vector::Ones(3));
  EXPECT_EQ(u.W, W);
  EXPECT_EQ(u.rho, 0.0);
}

TEST(WUpdate, SurrogateDecreases) {
  CounterRng rng(78);
  for (int trial = 0; trial < 20; ++trial) {
    const Eigen::Index p = 3, n = 300;
    const Matrix W = test::invertible_matrix(rng, p);
    const Matrix x = test::gaussian_matrix(rng, p, n);
    const Matrix y = W * x;
    const Vector noise = test::uniform_vector(rng, p, 0.2, 2.0);
    const MixturePosterior post = estep_ml(MultiViewData({y, Matrix(y + test::gaussian_matrix(rng, p, n))}), {noise, noise});
    const Matrix G = w_gradient(y, post, noise);
    ASSERT_GT(G.norm(), 1e-9);
    const WUpdate u = w_update(W, G, y, post, noise);
    ASSERT_FALSE(u.stalled);
    EXPECT_LT((u.y - u.W * x).norm(), 1e-10 * u.y.norm());
    EXPECT_LT(surrogate_objective(u.W, u.y, post, noise), surrogate_objective(W, y, post, noise));
  }
}

TEST(MlEngine, LikelihoodMatchesDirectRoute) {
  const Generated g = generate(preset_scenario("hybrid", 3000, 79));
  const MultiViewData x = g.data.centered();
  MlState s;
  CounterRng rng(80);
  for (std::size_t i = 0; i < x.m(); ++i) {
    s.unmixing.push_back(test::invertible_matrix(rng, 4));
    s.noise_vars.push_back(test::uniform_vector(rng, 4, 0.1, 2.0));
  }
  for (int k = 0; k < 5; ++k) {
    const std::vector<Matrix> W = s.unmixing;
    const std::vector<Vector> noise = s.noise_vars;
    s = ml_iteration(x, s);
    EXPECT_NEAR(s.loglik_trace.back(), ml_observed_loglik(x, W, noise), 1e-10 * std::abs(s.loglik_trace.back()));
  }
}

// Random starts can drift toward a view-dropping optimum (one noise variance growing without bound),
// so only the default start is held to the tolerance.
TEST(FitShicaMl, MonotoneAndConverged) {
  for (std::uint64_t seed = 0; seed < 4; ++seed) {
    const Generated g = generate(preset_scenario(seed % 2 ? "nongauss" : "hybrid", 3000, 90 + seed));
    MlInit random;
    random.kind = MlInitKind::random;
    random.seed = seed;
    MlOptions short_run;
    short_run.max_iter = 2000;
    for (const MlState& st : {fit_shica_ml(g.data, random, short_run), fit_shica_ml(g.data)}) {
      EXPECT_EQ(st.monotonicity_violations, 0);
      for (std::size_t k = 1; k < st.loglik_trace.size(); ++k) EXPECT_GE(st.loglik_trace[k], st.loglik_trace[k - 1] - 1e-8);
      for (const auto& v : st.noise_vars) EXPECT_TRUE((v.array() >= 1e-8).all());
    }
    EXPECT_TRUE(fit_shica_ml(g.data).converged);
  }
}

TEST(FitShicaMl, SeparatesNonGaussianEqualNoise) {
  std::vector<double> ml, j;
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    const Generated g = generate(preset_scenario("nongauss", 20000, 300 + seed));
    FitConfig cfg;
    cfg.algo = Algo::shica_ml;
    ml.push_back(mean_amari_distance(fit_algorithm(g.data, cfg).unmixing, g.truth.matrices));
    cfg.algo = Algo::shica_j;
    j.push_back(mean_amari_distance(fit_algorithm(g.data, cfg).unmixing, g.truth.matrices));
  }
  EXPECT_LT(median(ml), 2e-2);
  EXPECT_GT(median(j), 1e-1);
}

TEST(FitShicaMl, StationaryAfterConvergence) {
  const Generated g = generate(preset_scenario("nongauss", 5000, 81));
  MlOptions opts;
  opts.tol = 1e-13;
  opts.max_iter = 20000;
  MlState st = fit_shica_ml(g.data, {}, opts);
  const MultiViewData x = g.data.centered();
  st = ml_iteration(x, st);
  st = ml_iteration(x, st);
  const auto& t = st.loglik_trace;
  EXPECT_LT(std::abs(t[t.size() - 1] - t[t.size() - 2]), 1e-8);
}

TEST(FitShicaMl, EquivariantUnderPerViewTransforms) {
  CounterRng rng(95);
  const Generated g = generate(preset_scenario("nongauss", 2000, 95));
  MlInit init;
  init.kind = MlInitKind::given;
  std::vector<Matrix> M, moved;
  MlInit init_moved;
  init_moved.kind = MlInitKind::given;
  for (std::size_t i = 0; i < g.data.m(); ++i) {
    M.push_back(test::invertible_matrix(rng, 4, 20.0));
    moved.push_back(M.back() * g.data.view(i));
    init.unmixing.push_back(test::invertible_matrix(rng, 4, 20.0));
    init_moved.unmixing.push_back(init.unmixing.back() * M.back().inverse());
  }
  MlOptions opts;
  opts.max_iter = 30;
  const MlState a = fit_shica_ml(g.data, init, opts);
  const MlState b = fit_shica_ml(MultiViewData(moved), init_moved, opts);
  for (std::size_t i = 0; i < g.data.m(); ++i) EXPECT_LT(amari_distance(b.unmixing[i] * M[i], a.unmixing[i].inverse()), 1e-8);
}

TEST(FitShicaMl, RejectsTooFewViews) {
  EXPECT_THROW(fit_shica_ml(MultiViewData({Matrix::Ones(2, 10)})), DataError);
}

}  // namespace
}  // namespace shica
