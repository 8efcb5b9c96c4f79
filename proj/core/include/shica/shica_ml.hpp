#pragma once

// Maximum-likelihood ShICA with the super-Gaussian source density
//   p(s) = 1/2 N(s; 0, 1/2) + 1/2 N(s; 0, 3/2),
// fitted by generalized EM: closed-form E-step, closed-form noise update and
// one quasi-Newton step on each W_i per cycle.

#include "shica/shica_j.hpp"
#include "shica/types.hpp"

#include <array>
#include <cstdint>
#include <vector>

namespace shica {

inline constexpr std::array<double, 2> kMixtureVariances = {0.5, 1.5};

struct MixturePosterior {
  Matrix mean;                            ///< p x n, E[s_j | x]
  Matrix variance;                        ///< p x n, V[s_j | x]
  std::array<Matrix, 2> responsibilities; ///< normalized theta_alpha, each p x n
};

struct ScalarPosterior {
  double mean = 0.0;
  double variance = 0.0;
  std::array<double, 2> responsibilities{};
};

/// Posterior of s given the precision-weighted average ybar with variance sigma_bar.
ScalarPosterior mixture_posterior(double ybar, double sigma_bar);

MixturePosterior estep_ml(const MultiViewData& unmixed, const std::vector<Vector>& noise_vars);

/// Sigma_ij = mean_t (y_ij - E[s_j|x])^2 + V[s_j|x], floored.
std::vector<Vector> noise_mstep_ml(const MultiViewData& unmixed, const MixturePosterior& post, double floor = 1e-8);

/// Relative gradient -I + Sigma_i^{-1} (y_i - E[s|x]) y_i^T / n.
Matrix w_gradient(const Matrix& y_i, const MixturePosterior& post, const Vector& noise_i);

/// Diagonal-block Hessian model: coef(a, b) = E[y_b^2] / Sigma_a. The (a, b) and
/// (b, a) entries couple through [[coef(a,b), 1], [1, coef(b,a)]]; a diagonal
/// entry has curvature 1 + coef(a, a).
struct HessianApprox {
  Matrix coef;
};

HessianApprox hessian_approx(const Matrix& y_i, const Vector& noise_i);

/// Applies the approximate Hessian to a p x p perturbation.
Matrix apply_hessian(const HessianApprox& h, const Matrix& eps);

/// Solves H direction = G block by block; 2x2 blocks with determinant below
/// `min_curvature` are shifted to keep the model positive definite.
Matrix newton_direction(const Matrix& G, const HessianApprox& h, double min_curvature = 1e-4);

/// -log|det W_i| + 1/2 sum_a mean_t [(y_ia - E_a)^2 + V_a] / Sigma_ia
double surrogate_objective(const Matrix& W_i, const Matrix& y_i, const MixturePosterior& post, const Vector& noise_i);

struct WUpdate {
  Matrix W;
  Matrix y;           ///< (I - rho D) y_i, equal to W x_i
  double rho = 0.0;   ///< accepted step, 0 when stalled
  bool stalled = false;
};

/// W_i <- (I - rho H^{-1} G) W_i, rho = 1, 1/2, ..., 2^-max_halvings until the surrogate decreases.
WUpdate w_update(const Matrix& W_i, const Matrix& G, const Matrix& y_i, const MixturePosterior& post, const Vector& noise_i,
                 int max_halvings = 12);

/// Per-sample observed log-likelihood, including sum_i log|det W_i|.
double ml_observed_loglik(const MultiViewData& x, const std::vector<Matrix>& unmixing, const std::vector<Vector>& noise_vars);

enum class MlInitKind { shica_j, given, random };

struct MlInit {
  MlInitKind kind = MlInitKind::shica_j;
  std::vector<Matrix> unmixing;    ///< for `given`
  std::vector<Vector> noise_vars;  ///< for `given` (defaults to ones when empty)
  std::uint64_t seed = 0;          ///< for `random`
};

struct MlOptions {
  int max_iter = 10000;
  double tol = 1e-9;            ///< relative observed log-likelihood change
  double noise_floor = 1e-8;
  bool centered = true;
  int max_halvings = 12;
  double min_curvature = 1e-4;
  ShicaJOptions init_options;   ///< used by MlInitKind::shica_j
};

struct MlState {
  std::vector<Matrix> unmixing;
  std::vector<Vector> noise_vars;
  std::vector<double> loglik_trace;  ///< one per E-step, at the parameters entering that cycle
  std::array<double, 2> mixture_vars = kMixtureVariances;
  int iterations = 0;
  bool converged = false;
  int stalls = 0;                   ///< W line searches that found no decrease
  int monotonicity_violations = 0;  ///< cycles where the log-likelihood dropped by more than 1e-8
};

MlState fit_shica_ml(const MultiViewData& data, const MlInit& init = {}, const MlOptions& opts = {});

/// One E-step + M-step cycle on (already centered if desired) data, appending
/// the log-likelihood of the incoming parameters to the trace.
MlState ml_iteration(const MultiViewData& x, MlState state, const MlOptions& opts = {});

}  // namespace shica
