#pragma once

// Second-order ShICA: Multiset CCA, joint-diagonalization rotation fix,
// per-view scale recovery, then Gaussian EM for the noise variances.

#include "shica/covariance.hpp"
#include "shica/jointdiag.hpp"
#include "shica/mcca.hpp"
#include "shica/types.hpp"

#include <string>
#include <vector>

namespace shica {

enum class ScalingRule {
  coordinate_exact,  ///< exact per-coordinate minimizer of the scaling objective
  appendix,          ///< Phi_i = sum_j Phi_j / sum_j diag(Y_ij) Phi_j^2 (kept for comparison)
};

struct ScalingOptions {
  int max_iter = 100;
  double tol = 1e-9;
  ScalingRule rule = ScalingRule::coordinate_exact;
  /// coordinate_exact only: after each sweep, try one Newton step per component and keep it
  /// when it lowers that component's objective. Coordinate descent alone can need hundreds of sweeps.
  bool newton = true;
};

struct ScalingResult {
  std::vector<Vector> phi;             ///< diagonal of Phi_i per view
  std::vector<double> objective_trace; ///< at initialization, then after each sweep
  int sweeps = 0;
  bool converged = false;
};

/// L(Phi) = sum_{i != j} || Phi_i diag(Gamma_ij) Phi_j - I ||_F^2
double scaling_objective(const BlockCovariance& gamma, const std::vector<Vector>& phi);

/// Cyclic coordinate minimization of scaling_objective from Phi_i = 1, views
/// in order, until the largest relative change in a sweep is below tol.
/// Throws DegenerateScaleError on a zero denominator.
ScalingResult scaling_fixed_point(const BlockCovariance& gamma, const ScalingOptions& opts = {});

struct EmOptions {
  int max_iter = 10000;
  double tol = 1e-10;        ///< relative log-likelihood change
  double floor = 1e-8;       ///< variance floor
  double init_floor = 1e-6;  ///< clip for the diag(C_ii) initialization
};

struct EmResult {
  std::vector<Vector> noise_vars;
  std::vector<double> loglik_trace;  ///< per-sample observed log-likelihood, one per E-step
  int iterations = 0;
  bool converged = false;
};

/// Per-sample observed log-likelihood of the Gaussian-source model with fixed
/// unmixing, from the unmixed covariances W_i C_ij W_j^T.
double gaussian_loglik(const BlockCovariance& unmixed_cov, const std::vector<Vector>& noise_vars,
                       const std::vector<Matrix>& unmixing);

/// Closed-form EM on the unmixed covariances (never touches samples).
EmResult em_gaussian_noise(const BlockCovariance& raw_cov, const std::vector<Matrix>& unmixing, const EmOptions& opts = {});

struct SharedPosterior {
  Matrix mean;      ///< p x n, E[s | x]
  Vector variance;  ///< V[s | x], identical for every sample
};

/// Gaussian MMSE estimate from unmixed views y_i = W_i x_i.
SharedPosterior mmse_gaussian(const MultiViewData& unmixed, const std::vector<Vector>& noise_vars);

struct ShicaJOptions {
  bool centered = true;
  JdOptions jd;
  ScalingOptions scaling;
  EmOptions em;
  bool estimate_noise = true;
};

struct ShicaJDiagnostics {
  double mcca_gap = 0.0;
  Vector mcca_eigenvalues;
  int jd_iterations = 0;
  bool jd_converged = false;
  int scaling_sweeps = 0;
  bool scaling_converged = false;
  std::vector<double> em_loglik_trace;
  std::vector<std::string> warnings;
};

struct ShicaJFit {
  std::vector<Matrix> unmixing;  ///< Phi_i Q W_i
  std::vector<Vector> noise_vars;
  ShicaJDiagnostics diagnostics;
};

/// Rotation-corrected MCCA estimates U_i = Q W_i, with Q jointly diagonalizing W_i C_ii W_i^T.
std::vector<Matrix> jd_correct(const BlockCovariance& cov, const MccaFit& mcca, const JdOptions& opts, JdResult* jd_out = nullptr);

/// Full pipeline from covariances. Rows are signed so each row of view 0 has a positive largest entry.
ShicaJFit fit_shica_j(const BlockCovariance& cov, const ShicaJOptions& opts = {});

/// Full pipeline from samples; rows are signed so the view-averaged component
/// has positive skewness when the skew is significant, else as above.
ShicaJFit fit_shica_j(const MultiViewData& data, const ShicaJOptions& opts = {});

/// Flips rows of every W_i jointly (sign convention shared by ShICA-J outputs).
void apply_sign_convention(std::vector<Matrix>& unmixing, const MultiViewData* data);

}  // namespace shica
