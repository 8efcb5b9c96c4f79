#include "support.hpp"

#include "shica/covariance.hpp"
#include "shica/errors.hpp"
#include "shica/experiments.hpp"
#include "shica/gev.hpp"
#include "shica/metrics.hpp"
#include "shica/synth.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

namespace shica {
namespace {

TEST(Amari, HandValue) {
  Matrix w(2, 2);
  w << 1, 1, 0, 1;
  EXPECT_DOUBLE_EQ(amari_distance(w, Matrix::Identity(2, 2)), 0.5);
}

TEST(Amari, ZeroExactlyOnScaledPermutations) {
  CounterRng rng(100);
  for (int trial = 0; trial < 30; ++trial) {
    const auto p = static_cast<Eigen::Index>(1 + rng() % 8);
    const Matrix A = test::invertible_matrix(rng, p);
    const Matrix P = test::scaled_permutation(rng, p);
    EXPECT_NEAR(amari_distance(P * A.inverse(), A), 0.0, 1e-12);
    if (p > 1) {
      Matrix Q = P;
      // one extra off-pattern entry breaks the scale-permutation structure
      Eigen::Index r = 0, c = 0;
      P.row(0).cwiseAbs().maxCoeff(&c);
      Q(r, (c + 1) % p) = 0.3 * Q(r, c);
      EXPECT_GT(amari_distance(Q * A.inverse(), A), 1e-3);
    }
  }
}

// Row scaling moves the column terms, so only signed permutations leave a nonzero distance unchanged.
TEST(Amari, InvariantToLeftSignedPermutation) {
  CounterRng rng(101);
  for (int trial = 0; trial < 20; ++trial) {
    const Matrix W = test::invertible_matrix(rng, 5);
    const Matrix A = test::invertible_matrix(rng, 5);
    const Matrix P = test::scaled_permutation(rng, 5).array().sign().matrix();
    EXPECT_NEAR(amari_distance(P * W, A), amari_distance(W, A), 1e-13);
  }
}

TEST(Amari, ShapeAndSingularity) {
  EXPECT_THROW(amari_distance(Matrix::Identity(2, 2), Matrix::Identity(3, 3)), ShapeError);
  EXPECT_THROW(amari_distance(Matrix::Zero(2, 2), Matrix::Identity(2, 2)), NumericalError);
}

TEST(Amari, ChanceLevelIsOrderOne) {
  const double c = chance_amari(4, 100, 3);
  EXPECT_GT(c, 0.2);
  EXPECT_LT(c, 1.0);
  EXPECT_EQ(c, chance_amari(4, 100, 3));
}

TEST(R2, HandValueAndUndefinedRows) {
  Matrix truth(2, 2), pred(2, 2);
  truth << 0, 2, 5, 5;
  pred << 1, 2, 1, 1;
  const R2Score s = r2_score(pred, truth);
  EXPECT_DOUBLE_EQ(s.per_row(0), 0.5);
  EXPECT_TRUE(std::isnan(s.per_row(1)));
  EXPECT_TRUE(s.defined[0]);
  EXPECT_FALSE(s.defined[1]);
  EXPECT_DOUBLE_EQ(s.mean, 0.5);
  EXPECT_THROW(r2_score(Matrix::Ones(2, 2), Matrix::Ones(2, 3)), ShapeError);
}

TEST(R2, PerfectPredictionIsOne) {
  CounterRng rng(102);
  const Matrix t = test::gaussian_matrix(rng, 3, 50);
  EXPECT_NEAR(r2_score(t, t).mean, 1.0, 1e-15);
}

double brute_force_assignment(const Matrix& cost) {
  std::vector<int> perm(static_cast<std::size_t>(cost.rows()));
  std::iota(perm.begin(), perm.end(), 0);
  double best = std::numeric_limits<double>::infinity();
  do {
    double total = 0.0;
    for (std::size_t r = 0; r < perm.size(); ++r) total += cost(static_cast<Eigen::Index>(r), perm[r]);
    best = std::min(best, total);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

TEST(Hungarian, MatchesBruteForce) {
  CounterRng rng(103);
  for (int trial = 0; trial < 40; ++trial) {
    const auto p = static_cast<Eigen::Index>(1 + rng() % 7);
    Matrix cost = test::gaussian_matrix(rng, p, p).cwiseAbs();
    if (trial % 5 == 0) cost = cost.array().round();  // ties
    const auto assign = hungarian_assignment(cost);
    std::vector<std::size_t> sorted = assign;
    std::sort(sorted.begin(), sorted.end());
    for (std::size_t k = 0; k < sorted.size(); ++k) ASSERT_EQ(sorted[k], k);
    double total = 0.0;
    for (std::size_t r = 0; r < assign.size(); ++r) total += cost(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(assign[r]));
    EXPECT_NEAR(total, brute_force_assignment(cost), 1e-12);
  }
}

TEST(MatchComponents, RecoversSignedPermutation) {
  CounterRng rng(104);
  const Matrix ref = test::gaussian_matrix(rng, 4, 200);
  Matrix est(4, 200);
  const std::vector<Eigen::Index> perm = {2, 0, 3, 1};
  const std::vector<double> sign = {-1, 1, 1, -1};
  for (Eigen::Index k = 0; k < 4; ++k) est.row(perm[static_cast<std::size_t>(k)]) = sign[static_cast<std::size_t>(k)] * 3.0 * ref.row(k);
  const ComponentMatch cm = match_components(est, ref);
  for (std::size_t k = 0; k < 4; ++k) {
    EXPECT_EQ(cm.est_for_ref[k], static_cast<std::size_t>(perm[k]));
    EXPECT_EQ(cm.signs[k], static_cast<int>(sign[k]));
  }
  EXPECT_NEAR(cm.total, 0.0, 1e-12);
}

TEST(Synth, DeterministicPerSeed) {
  const Generated a = generate(preset_scenario("hybrid", 500, 7));
  const Generated b = generate(preset_scenario("hybrid", 500, 7));
  const Generated c = generate(preset_scenario("hybrid", 500, 8));
  for (std::size_t i = 0; i < a.data.m(); ++i) {
    EXPECT_EQ(a.data.view(i), b.data.view(i));
    EXPECT_NE(a.data.view(i), c.data.view(i));
  }
  EXPECT_EQ(a.sources, b.sources);
}

TEST(Synth, SourcesHaveUnitVariance) {
  for (const char* name : {"gauss", "nongauss", "power"}) {
    const Generated g = generate(preset_scenario(name, 200000, 9, 0.8));
    for (Eigen::Index j = 0; j < g.sources.rows(); ++j) {
      EXPECT_NEAR(g.sources.row(j).squaredNorm() / 200000.0, 1.0, 0.02) << name;
      EXPECT_NEAR(g.sources.row(j).mean(), 0.0, 0.02) << name;
    }
  }
}

TEST(Synth, ViewsFollowTheModel) {
  const Generated g = generate(preset_scenario("gauss", 50, 10));
  // x_i = A_i (s + n_i): the implied noise A_i^{-1} x_i - s is independent of view ordering
  const ModelParams w = g.truth.inverted();
  for (std::size_t i = 0; i < g.data.m(); ++i) {
    const Matrix noise = w.matrices[i] * g.data.view(i) - g.sources;
    EXPECT_LT(noise.rowwise().squaredNorm().maxCoeff() / 50.0, 10.0 * g.truth.noise_vars[i].maxCoeff() + 1e-12);
  }
}

TEST(Synth, NoiseSchemes) {
  ScenarioSpec spec = preset_scenario("nongauss", 10, 1);
  const ModelParams eq = draw_model(spec);
  for (const auto& v : eq.noise_vars) EXPECT_TRUE(v.isApprox(Vector::Constant(4, spec.noise.sigma)));

  const ModelParams hy = draw_model(preset_scenario("hybrid", 10, 1));
  for (const auto& v : hy.noise_vars) {
    EXPECT_EQ(v(2), 0.5);
    EXPECT_EQ(v(3), 0.5);
  }
  EXPECT_NE(hy.noise_vars[0](0), hy.noise_vars[1](0));

  const ModelParams pp = draw_model(preset_scenario("permuted", 10, 1));
  for (std::size_t i = 0; i < pp.m(); ++i) EXPECT_EQ(pp.noise_vars[i](1), pp.noise_vars[(i + 1) % pp.m()](0));

  const ModelParams di = draw_model(preset_scenario("gauss", 10, 1));
  for (const auto& v : di.noise_vars) EXPECT_TRUE((v.array() >= 0.0).all() && (v.array() <= 1.0).all());
}

TEST(Synth, TargetEigenvalues) {
  ScenarioSpec spec;
  spec.m = 3;
  spec.p = 3;
  spec.sources.assign(3, {SourceKind::gaussian, 1.0});
  spec.noise.scheme = NoiseScheme::target_eigvals;
  spec.noise.eigenvalues = {2.01, 2.0, 1.5};
  for (int variant = 0; variant < 3; ++variant) {
    spec.noise.equal_views = variant == 1;
    spec.noise.log_profile = variant == 2;
    if (variant == 2) {
      spec.noise.low = 1e-4;
      spec.noise.high = 1e2;
    }
    const ModelParams params = draw_model(spec);
    Matrix grid(3, 3);
    for (std::size_t i = 0; i < 3; ++i) grid.row(static_cast<Eigen::Index>(i)) = params.noise_vars[i].transpose();
    const Vector lam = theoretical_eigenvalues(grid);
    EXPECT_NEAR(lam(0), 2.01, 1e-10);
    EXPECT_NEAR(lam(1), 2.0, 1e-10);
    EXPECT_NEAR(lam(2), 1.5, 1e-10);
  }
  spec.noise.low = 0.0;
  EXPECT_THROW(spec.validate(), ConfigError);
  EXPECT_DOUBLE_EQ(variance_for_eigenvalue(3, 2.0), 1.0);
  EXPECT_THROW(variance_for_eigenvalue(3, 3.5), DataError);
}

TEST(Synth, ScenarioJsonRoundTrip) {
  ScenarioSpec spec = preset_scenario("power", 1234, 99, 0.9);
  const ScenarioSpec back = scenario_from_json_text(scenario_to_json_text(spec));
  EXPECT_EQ(back.m, spec.m);
  EXPECT_EQ(back.n, 1234u);
  EXPECT_EQ(back.seed, 99u);
  ASSERT_EQ(back.sources.size(), 4u);
  EXPECT_EQ(back.sources[0].kind, SourceKind::power);
  EXPECT_DOUBLE_EQ(back.sources[0].exponent, 0.9);
  EXPECT_EQ(back.noise.scheme, NoiseScheme::diverse_uniform);
}

TEST(Synth, ScenarioValidation) {
  EXPECT_THROW(scenario_from_json_text("{"), ConfigError);
  EXPECT_THROW(scenario_from_json_text(R"({"m": 3, "p": 2, "n": 10, "sources": ["gaussian"]})"), ConfigError);
  EXPECT_THROW(scenario_from_json_text(R"({"m": 3, "p": 1, "n": 10, "sources": ["cauchy"]})"), ConfigError);
  EXPECT_THROW(preset_scenario("nope", 10, 0), ConfigError);
  const ScenarioSpec ok = scenario_from_json_text(R"({"m": 3, "p": 1, "n": 10, "sources": ["laplace"], "noise": {"scheme": "equal", "sigma": 0.2}})");
  EXPECT_EQ(ok.noise.scheme, NoiseScheme::equal);
  EXPECT_DOUBLE_EQ(ok.noise.sigma, 0.2);
}

TEST(Experiments, MedianAndSeeds) {
  EXPECT_DOUBLE_EQ(median({3.0, 1.0, 2.0}), 2.0);
  EXPECT_DOUBLE_EQ(median({4.0, 1.0, 2.0, 3.0}), 2.5);
  EXPECT_DOUBLE_EQ(median({1.0, std::nan(""), 3.0}), 2.0);
  EXPECT_NE(cell_seed(0, 1), cell_seed(0, 2));
  EXPECT_EQ(cell_seed(5, 1, 2, 3), cell_seed(5, 1, 2, 3));
  EXPECT_EQ(parse_algo("shica-ml"), Algo::shica_ml);
  EXPECT_EQ(algo_name(Algo::mcca), "mcca");
  EXPECT_THROW(parse_algo("mvica"), ConfigError);
}

TEST(Experiments, SeparationBenchIsReproducible) {
  SeparationConfig cfg;
  cfg.scenario = "nongauss";
  cfg.ns = {500};
  cfg.seeds = 2;
  cfg.algos = {Algo::mcca, Algo::shica_j};
  cfg.threads = 2;
  const auto a = run_separation_bench(cfg);
  const auto b = run_separation_bench(cfg);
  ASSERT_EQ(a.size(), 4u);
  for (std::size_t k = 0; k < a.size(); ++k) {
    EXPECT_EQ(a[k].amari, b[k].amari);
    EXPECT_EQ(a[k].status, "ok");
    EXPECT_EQ(a[k].threads, 2u);
  }
}

}  // namespace
}  // namespace shica
