#include "support.hpp"

#include "shica/errors.hpp"
#include "shica/jointdiag.hpp"
#include "shica/metrics.hpp"

#include <gtest/gtest.h>

#include <cmath>

namespace shica {
namespace {

JdProblem diagonalizable_set(CounterRng& rng, Eigen::Index p, std::size_t m, const Matrix& V) {
  JdProblem prob;
  for (std::size_t i = 0; i < m; ++i) {
    const Vector d = test::uniform_vector(rng, p, 0.2, 5.0);
    prob.mats.push_back(V * d.asDiagonal() * V.transpose());
  }
  return prob;
}

TEST(Pham, ZeroOnDiagonalSet) {
  JdProblem prob;
  prob.mats = {Vector::LinSpaced(3, 1, 3).asDiagonal(), Vector::LinSpaced(3, 2, 5).asDiagonal()};
  EXPECT_EQ(pham_criterion(Matrix::Identity(3, 3), prob), 0.0);
}

TEST(Pham, HandEvaluatedTwoByTwo) {
  JdProblem prob;
  Matrix k(2, 2);
  k << 2, 1, 1, 2;
  prob.mats = {k};
  // 1/2 [log(2 * 2) - log(3)]
  EXPECT_NEAR(pham_criterion(Matrix::Identity(2, 2), prob), 0.143841036225890, 1e-12);
}

TEST(Pham, InvariantToPositiveRowScaling) {
  CounterRng rng(40);
  JdProblem prob;
  for (int i = 0; i < 4; ++i) prob.mats.push_back(test::spd_matrix(rng, 4));
  const Matrix B = test::invertible_matrix(rng, 4);
  const Vector d = test::uniform_vector(rng, 4, 0.1, 10.0);
  EXPECT_NEAR(pham_criterion(d.asDiagonal() * B, prob), pham_criterion(B, prob), 1e-11);
}

TEST(Pham, WeightsScaleTerms) {
  CounterRng rng(41);
  JdProblem prob;
  prob.mats = {test::spd_matrix(rng, 3), test::spd_matrix(rng, 3)};
  JdProblem a = prob, b = prob;
  a.mats.resize(1);
  b.mats.erase(b.mats.begin());
  prob.weights = {2.0, 0.5};
  const Matrix I = Matrix::Identity(3, 3);
  EXPECT_NEAR(pham_criterion(I, prob), 2.0 * pham_criterion(I, a) + 0.5 * pham_criterion(I, b), 1e-13);
}

TEST(Pham, NonSpdTransformIsNumericalError) {
  JdProblem prob;
  Matrix k(2, 2);
  k << 1, 2, 2, 1;  // indefinite
  prob.mats = {k};
  EXPECT_THROW(pham_criterion(Matrix::Identity(2, 2), prob), NumericalError);
}

TEST(JointDiagonalize, AlreadyDiagonal) {
  JdProblem prob;
  prob.mats = {Vector::LinSpaced(3, 1, 3).asDiagonal(), Vector::LinSpaced(3, 3, 1).asDiagonal()};
  const JdResult r = joint_diagonalize(prob);
  EXPECT_EQ(r.criterion_trace.front(), 0.0);
  EXPECT_LT(amari_distance(r.B, Matrix::Identity(3, 3)), 1e-12);
  EXPECT_TRUE(r.converged);
}

TEST(JointDiagonalize, RecoversExactlyDiagonalizableSets) {
  CounterRng rng(42);
  for (int trial = 0; trial < 12; ++trial) {
    const auto p = static_cast<Eigen::Index>(2 + rng() % 9);
    const std::size_t m = 2 + rng() % 19;
    const Matrix V = test::invertible_matrix(rng, p, 50.0);
    const JdResult r = joint_diagonalize(diagonalizable_set(rng, p, m, V));
    EXPECT_LT(amari_distance(r.B, V), 1e-6) << "p=" << p << " m=" << m;
    EXPECT_GT(std::abs(r.B.determinant()), 0.0);
  }
}

TEST(JointDiagonalize, TraceIsNonIncreasingOnRandomSets) {
  CounterRng rng(43);
  for (int trial = 0; trial < 10; ++trial) {
    JdProblem prob;
    const auto p = static_cast<Eigen::Index>(2 + rng() % 5);
    for (int i = 0; i < 5; ++i) prob.mats.push_back(test::spd_matrix(rng, p));
    const JdResult r = joint_diagonalize(prob);
    for (std::size_t k = 1; k < r.criterion_trace.size(); ++k) EXPECT_LE(r.criterion_trace[k], r.criterion_trace[k - 1]);
    EXPECT_LE(pham_criterion(r.B, prob), r.criterion_trace.front());
  }
}

TEST(JointDiagonalize, EquivariantUnderCongruence) {
  CounterRng rng(44);
  JdProblem prob = diagonalizable_set(rng, 4, 6, test::invertible_matrix(rng, 4, 20.0));
  const Matrix R = Eigen::HouseholderQR<Matrix>(test::gaussian_matrix(rng, 4, 4)).householderQ();
  JdProblem rotated;
  for (const auto& k : prob.mats) rotated.mats.push_back(R * k * R.transpose());
  const Matrix B = joint_diagonalize(prob).B;
  const Matrix Bp = joint_diagonalize(rotated).B;
  EXPECT_LT(amari_distance(Bp * R, B.inverse()), 1e-6);
}

}  // namespace
}  // namespace shica
