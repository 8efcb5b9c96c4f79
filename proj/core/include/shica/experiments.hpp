#pragma once

// Fit dispatch and the two benchmark sweeps (covariance perturbation and
// separation versus sample size), shared by the CLI and the acceptance suite.

#include "shica/mcca.hpp"
#include "shica/shica_j.hpp"
#include "shica/shica_ml.hpp"
#include "shica/types.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace shica {

enum class Algo { mcca, shica_j, shica_ml };

/// "mcca", "shica-j", "shica-ml"; throws ConfigError otherwise.
Algo parse_algo(const std::string& name);
std::string algo_name(Algo algo);

struct FitConfig {
  Algo algo = Algo::shica_j;
  bool centered = true;
  ShicaJOptions shica_j;
  MlOptions shica_ml;
  MlInit ml_init;
};

struct FitOutcome {
  std::vector<Matrix> unmixing;
  std::vector<Vector> noise_vars;  ///< ones for mcca, which does not estimate noise
  std::optional<MccaFit> mcca;
  std::optional<ShicaJFit> shica_j;
  std::optional<MlState> shica_ml;
  double wall_time_seconds = 0.0;  ///< fit only, monotonic clock

  ModelParams params() const;
};

/// Raises DataError for m < 2 and warns through the fit diagnostics for m = 2.
FitOutcome fit_algorithm(const MultiViewData& data, const FitConfig& cfg);

/// Median Amari distance between random Gaussian unmixing and mixing matrices.
double chance_amari(std::size_t p, std::size_t draws = 100, std::uint64_t seed = 0);

double median(std::vector<double> v);

/// Mixes a base seed with cell coordinates into an independent seed.
std::uint64_t cell_seed(std::uint64_t base, std::uint64_t a, std::uint64_t b = 0, std::uint64_t c = 0);

struct PerturbationConfig {
  std::size_t m = 3;
  std::size_t p = 2;
  std::vector<double> gaps = {1e-4, 1e-2, 1.0};
  std::vector<double> deltas = {1e-6, 1e-5, 1e-4, 1e-3, 1e-2, 3e-2, 1e-1};
  std::size_t seeds = 50;
  std::uint64_t base_seed = 0;
  unsigned threads = 1;
  JdOptions jd;
};

struct PerturbationRecord {
  double gap = 0.0;
  double delta = 0.0;
  std::uint64_t seed = 0;
  std::string method;  ///< "raw" or "corrected"
  double amari = 0.0;
  std::string status = "ok";
};

struct PerturbationCell {
  double gap = 0.0;
  double delta = 0.0;
  double median_raw = 0.0;
  double median_corrected = 0.0;
  std::size_t runs = 0;
};

struct PerturbationResult {
  std::vector<PerturbationRecord> records;  ///< |gaps| * |deltas| * seeds * 2 rows
  std::vector<PerturbationCell> cells;      ///< gap-major, then delta
};

/// Top eigenvalues lambda_1 = 2 + gap, lambda_2 = 2 (further components spaced
/// below 2), exact
/// model covariances perturbed by delta * S; Amari distances averaged over views
/// against the true mixing matrices.
PerturbationResult run_perturbation_bench(const PerturbationConfig& cfg);

struct SeparationConfig {
  std::string scenario = "gauss";  ///< preset name
  std::vector<std::size_t> ns = {1000, 10000, 100000};
  std::size_t seeds = 20;
  std::uint64_t base_seed = 0;
  std::vector<Algo> algos = {Algo::mcca, Algo::shica_j, Algo::shica_ml};
  unsigned threads = 1;
  double exponent = 1.2;  ///< power preset only
  int ml_max_iter = 10000;
  double ml_tol = 1e-9;
};

struct SeparationRecord {
  std::string scenario;
  std::string algo;
  std::uint64_t seed = 0;
  std::size_t n = 0;
  double amari = 0.0;  ///< mean over views; NaN when status != "ok"
  double wall_time_seconds = 0.0;
  std::string status = "ok";
  unsigned threads = 1;
  int iterations = 0;
};

/// One record per (algo, n, seed). Failures become status rows.
std::vector<SeparationRecord> run_separation_bench(const SeparationConfig& cfg);

/// Median Amari of the records matching (algo, n), ignoring failed runs.
double median_amari(const std::vector<SeparationRecord>& recs, const std::string& algo, std::size_t n);
double median_wall_time(const std::vector<SeparationRecord>& recs, const std::string& algo, std::size_t n);

}  // namespace shica
