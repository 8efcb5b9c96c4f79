#pragma once

// Synthetic scenarios drawn from x_i = A_i (s + n_i).

#include "shica/types.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace shica {

enum class SourceKind { gaussian, laplace, power };

struct SourceSpec {
  SourceKind kind = SourceKind::gaussian;
  double exponent = 1.0;  ///< power kind: s = x |x|^(exponent - 1), x ~ N(0, 1)
};

enum class NoiseScheme {
  diverse_uniform,  ///< Sigma_ij = u^2, u ~ U(low, high) (standard deviation drawn uniformly)
  equal,            ///< Sigma_ij = sigma (a variance)
  permuted_pair,    ///< components (2k, 2k+1): second sequence is a cyclic shift of the first
  target_eigvals,   ///< per-component variances scaled so the pencil has the given eigenvalues
  hybrid,           ///< diverse_uniform for Gaussian components, equal(sigma) for the others
};

struct NoiseSpec {
  NoiseScheme scheme = NoiseScheme::diverse_uniform;
  double low = 0.0;
  double high = 1.0;
  double sigma = 0.5;
  std::vector<double> eigenvalues;
  /// target_eigvals: equal variance across views when set, otherwise a
  /// U(low, high) profile per component rescaled to hit the eigenvalue.
  bool equal_views = false;
  /// target_eigvals profiles drawn log-uniformly on [low, high] (low > 0).
  bool log_profile = false;
};

struct ScenarioSpec {
  std::size_t m = 5;
  std::size_t p = 4;
  std::size_t n = 1000;
  std::vector<SourceSpec> sources;  ///< one per component
  NoiseSpec noise;
  std::uint64_t seed = 0;

  /// Throws ConfigError naming the offending field.
  void validate() const;
};

ScenarioSpec scenario_from_json_text(const std::string& text);
ScenarioSpec load_scenario(const std::filesystem::path& path);
std::string scenario_to_json_text(const ScenarioSpec& spec);

/// Named presets used by the benchmarks: "gauss", "nongauss", "hybrid",
/// "power" (exponent given) and "permuted".
ScenarioSpec preset_scenario(const std::string& name, std::size_t n, std::uint64_t seed, double exponent = 1.2);

struct Generated {
  MultiViewData data;
  ModelParams truth;  ///< mixing direction
  Matrix sources;     ///< p x n
};

/// Mixing matrices and noise variances only. Independent RNG streams make these
/// identical for every n under one seed.
ModelParams draw_model(const ScenarioSpec& spec);

/// Equal per-view variance giving a single-component eigenvalue `lambda`: (m - lambda)/(lambda - 1).
double variance_for_eigenvalue(std::size_t m, double lambda);

/// c * profile with c >= 0 chosen so the secular root equals `lambda`.
Vector scale_to_eigenvalue(const Vector& profile, double lambda);

Generated generate(const ScenarioSpec& spec);

}  // namespace shica
