#include "shica/experiments.hpp"

#include "shica/covariance.hpp"
#include "shica/errors.hpp"
#include "shica/metrics.hpp"
#include "shica/rng.hpp"
#include "shica/synth.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <functional>
#include <limits>
#include <thread>

namespace shica {

namespace {

constexpr std::uint64_t kChanceStream = 0x4348414E4345ULL;
constexpr std::uint64_t kPerturbTag = 0x5045525455524221ULL;

void parallel_for(std::size_t count, unsigned threads, const std::function<void(std::size_t)>& body) {
  const unsigned workers = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(count)));
  if (workers == 1) {
    for (std::size_t k = 0; k < count; ++k) body(k);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  for (unsigned w = 0; w < workers; ++w)
    pool.emplace_back([&] {
      for (std::size_t k = next++; k < count; k = next++) body(k);
    });
  for (auto& t : pool) t.join();
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

Matrix gaussian_matrix(std::size_t p, CounterRng& rng) {
  const auto n = static_cast<Eigen::Index>(p);
  Matrix a(n, n);
  for (Eigen::Index c = 0; c < n; ++c)
    for (Eigen::Index r = 0; r < n; ++r) a(r, c) = rng.normal();
  return a;
}

}  // namespace

Algo parse_algo(const std::string& name) {
  if (name == "mcca") return Algo::mcca;
  if (name == "shica-j") return Algo::shica_j;
  if (name == "shica-ml") return Algo::shica_ml;
  throw ConfigError("unknown algorithm '" + name + "' (expected mcca, shica-j or shica-ml)");
}

std::string algo_name(Algo algo) {
  switch (algo) {
    case Algo::mcca: return "mcca";
    case Algo::shica_j: return "shica-j";
    case Algo::shica_ml: return "shica-ml";
  }
  return "?";
}

ModelParams FitOutcome::params() const {
  ModelParams out;
  out.direction = Direction::unmixing;
  out.matrices = unmixing;
  out.noise_vars = noise_vars;
  return out;
}

FitOutcome fit_algorithm(const MultiViewData& data, const FitConfig& cfg) {
  if (data.m() < 2) throw DataError("at least 2 views are required");
  FitOutcome out;
  const auto t0 = std::chrono::steady_clock::now();
  switch (cfg.algo) {
    case Algo::mcca: {
      MccaFit fit = in_stage("mcca", [&] { return fit_mcca(sample_covariance(data, cfg.centered)); });
      out.unmixing = fit.unmixing;
      out.noise_vars.assign(data.m(), Vector::Ones(static_cast<Eigen::Index>(data.p())));
      out.mcca = std::move(fit);
      break;
    }
    case Algo::shica_j: {
      ShicaJOptions opts = cfg.shica_j;
      opts.centered = cfg.centered;
      ShicaJFit fit = fit_shica_j(data, opts);
      out.unmixing = fit.unmixing;
      out.noise_vars = fit.noise_vars;
      out.shica_j = std::move(fit);
      break;
    }
    case Algo::shica_ml: {
      MlOptions opts = cfg.shica_ml;
      opts.centered = cfg.centered;
      MlState st = fit_shica_ml(data, cfg.ml_init, opts);
      out.unmixing = st.unmixing;
      out.noise_vars = st.noise_vars;
      out.shica_ml = std::move(st);
      break;
    }
  }
  out.wall_time_seconds = seconds_since(t0);
  return out;
}

double median(std::vector<double> v) {
  std::erase_if(v, [](double x) { return std::isnan(x); });
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  const std::size_t mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
  const double hi = v[mid];
  if (v.size() % 2 == 1) return hi;
  const double lo = *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid));
  return 0.5 * (lo + hi);
}

std::uint64_t cell_seed(std::uint64_t base, std::uint64_t a, std::uint64_t b, std::uint64_t c) {
  std::uint64_t h = CounterRng::mix64(base + 0x9E3779B97F4A7C15ULL);
  h = CounterRng::mix64(h ^ (a + 0x632BE59BD9B4E019ULL));
  h = CounterRng::mix64(h ^ (b + 0xD1B54A32D192ED03ULL));
  return CounterRng::mix64(h ^ (c + 0x8CB92BA72F3D8DD7ULL));
}

double chance_amari(std::size_t p, std::size_t draws, std::uint64_t seed) {
  CounterRng rng(seed, kChanceStream);
  std::vector<double> d;
  d.reserve(draws);
  while (d.size() < draws) {
    const Matrix w = gaussian_matrix(p, rng);
    const Matrix a = gaussian_matrix(p, rng);
    if (std::abs(w.determinant()) < 1e-6 || std::abs(a.determinant()) < 1e-6) continue;
    d.push_back(amari_distance(w, a));
  }
  return median(std::move(d));
}

PerturbationResult run_perturbation_bench(const PerturbationConfig& cfg) {
  if (cfg.p < 2) throw ConfigError("perturbation bench needs p >= 2");
  if (cfg.m < 3) throw ConfigError("perturbation bench needs m >= 3");
  for (double g : cfg.gaps)
    if (!(g > 0.0) || 2.0 + g > static_cast<double>(cfg.m)) throw ConfigError("gaps must lie in (0, m - 2]");
  for (double d : cfg.deltas)
    if (!(d >= 0.0)) throw ConfigError("deltas must be >= 0");

  const std::size_t ng = cfg.gaps.size();
  const std::size_t nd = cfg.deltas.size();
  PerturbationResult res;
  res.records.resize(ng * nd * cfg.seeds * 2);
  auto slot = [&](std::size_t g, std::size_t d, std::size_t s) { return ((g * nd + d) * cfg.seeds + s) * 2; };

  parallel_for(cfg.seeds, cfg.threads, [&](std::size_t s) {
    const std::uint64_t model_seed = cell_seed(cfg.base_seed, s);
    const std::uint64_t perturb_seed = cell_seed(cfg.base_seed, s, kPerturbTag);
    for (std::size_t g = 0; g < ng; ++g) {
      ScenarioSpec spec;
      spec.m = cfg.m;
      spec.p = cfg.p;
      spec.n = 1;
      spec.seed = model_seed;
      spec.sources.assign(cfg.p, {});
      spec.noise.scheme = NoiseScheme::target_eigvals;
      // Profiles spread over six decades; narrow U(0, 1) profiles leave JD too little diversity at large gaps.
      spec.noise.log_profile = true;
      spec.noise.low = 1e-4;
      spec.noise.high = 1e2;
      spec.noise.eigenvalues.push_back(2.0 + cfg.gaps[g]);
      for (std::size_t j = 1; j < cfg.p; ++j) spec.noise.eigenvalues.push_back(2.0 - 0.5 * static_cast<double>(j - 1) / static_cast<double>(cfg.p));
      const ModelParams truth = draw_model(spec);
      const BlockCovariance exact = model_covariance(truth);

      for (std::size_t d = 0; d < nd; ++d) {
        PerturbationRecord raw{cfg.gaps[g], cfg.deltas[d], s, "raw", 0.0, "ok"};
        PerturbationRecord cor{cfg.gaps[g], cfg.deltas[d], s, "corrected", 0.0, "ok"};
        try {
          const BlockCovariance cov = perturb_covariance(exact, cfg.deltas[d], perturb_seed);
          const MccaFit fit = fit_mcca(cov);
          raw.amari = mean_amari_distance(fit.unmixing, truth.matrices);
          try {
            cor.amari = mean_amari_distance(jd_correct(cov, fit, cfg.jd), truth.matrices);
          } catch (const Error& e) {
            cor.amari = std::numeric_limits<double>::quiet_NaN();
            cor.status = std::string("error: ") + e.what();
          }
        } catch (const Error& e) {
          raw.amari = cor.amari = std::numeric_limits<double>::quiet_NaN();
          raw.status = cor.status = std::string("error: ") + e.what();
        }
        res.records[slot(g, d, s)] = std::move(raw);
        res.records[slot(g, d, s) + 1] = std::move(cor);
      }
    }
  });

  for (std::size_t g = 0; g < ng; ++g)
    for (std::size_t d = 0; d < nd; ++d) {
      std::vector<double> raw, cor;
      for (std::size_t s = 0; s < cfg.seeds; ++s) {
        raw.push_back(res.records[slot(g, d, s)].amari);
        cor.push_back(res.records[slot(g, d, s) + 1].amari);
      }
      res.cells.push_back({cfg.gaps[g], cfg.deltas[d], median(raw), median(cor), cfg.seeds});
    }
  return res;
}

std::vector<SeparationRecord> run_separation_bench(const SeparationConfig& cfg) {
  // Validates the preset name before any work is scheduled.
  (void)preset_scenario(cfg.scenario, 1, 0, cfg.exponent);
  const std::size_t nn = cfg.ns.size();
  const std::size_t na = cfg.algos.size();
  std::vector<SeparationRecord> out(nn * cfg.seeds * na);

  parallel_for(nn * cfg.seeds, cfg.threads, [&](std::size_t cell) {
    const std::size_t k = cell / cfg.seeds;
    const std::size_t s = cell % cfg.seeds;
    const std::size_t n = cfg.ns[k];
    const std::uint64_t seed = cfg.base_seed + s;
    std::optional<Generated> gen;
    std::string gen_error;
    try {
      gen = generate(preset_scenario(cfg.scenario, n, seed, cfg.exponent));
    } catch (const Error& e) {
      gen_error = std::string("error: generate: ") + e.what();
    }
    for (std::size_t a = 0; a < na; ++a) {
      SeparationRecord rec;
      rec.scenario = cfg.scenario;
      rec.algo = algo_name(cfg.algos[a]);
      rec.seed = seed;
      rec.n = n;
      rec.threads = cfg.threads;
      rec.amari = std::numeric_limits<double>::quiet_NaN();
      if (!gen) {
        rec.status = gen_error;
      } else {
        try {
          FitConfig fc;
          fc.algo = cfg.algos[a];
          fc.shica_ml.max_iter = cfg.ml_max_iter;
          fc.shica_ml.tol = cfg.ml_tol;
          const FitOutcome fit = fit_algorithm(gen->data, fc);
          rec.wall_time_seconds = fit.wall_time_seconds;
          rec.amari = mean_amari_distance(fit.unmixing, gen->truth.matrices);
          if (fit.shica_ml) rec.iterations = fit.shica_ml->iterations;
          if (fit.shica_j) rec.iterations = fit.shica_j->diagnostics.jd_iterations;
        } catch (const Error& e) {
          rec.status = std::string("error: ") + e.what();
        }
      }
      out[(k * cfg.seeds + s) * na + a] = std::move(rec);
    }
  });
  return out;
}

namespace {

double median_field(const std::vector<SeparationRecord>& recs, const std::string& algo, std::size_t n,
                    double SeparationRecord::*field) {
  std::vector<double> v;
  for (const auto& r : recs)
    if (r.algo == algo && r.n == n && r.status == "ok") v.push_back(r.*field);
  return median(std::move(v));
}

}  // namespace

double median_amari(const std::vector<SeparationRecord>& recs, const std::string& algo, std::size_t n) {
  return median_field(recs, algo, n, &SeparationRecord::amari);
}

double median_wall_time(const std::vector<SeparationRecord>& recs, const std::string& algo, std::size_t n) {
  return median_field(recs, algo, n, &SeparationRecord::wall_time_seconds);
}

}  // namespace shica
