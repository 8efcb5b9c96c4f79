#include "cli/commands.hpp"

#include "cli/csv.hpp"
#include "shica/data_io.hpp"
#include "shica/errors.hpp"
#include "shica/experiments.hpp"
#include "shica/metrics.hpp"
#include "shica/shica_j.hpp"
#include "shica/shica_ml.hpp"
#include "shica/synth.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <thread>

namespace shica::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

unsigned default_threads() { return std::max(1u, std::thread::hardware_concurrency()); }

json to_json(const Vector& v) {
  json a = json::array();
  for (Eigen::Index k = 0; k < v.size(); ++k) a.push_back(v(k));
  return a;
}

// NaN is not representable in JSON.
json number_or_null(double x) { return std::isfinite(x) ? json(x) : json(nullptr); }

void write_json(const json& doc, const fs::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << doc.dump(2) << '\n';
  if (!out) throw IoError("write failed for " + path.string());
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw IoError("cannot create directory " + dir.string());
}

template <class T>
std::vector<T> parse_list(const std::string& text, const char* flag) {
  std::vector<T> out;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const std::size_t next = std::min(text.find(',', pos), text.size());
    const std::string item = text.substr(pos, next - pos);
    try {
      std::size_t used = 0;
      if constexpr (std::is_floating_point_v<T>) {
        out.push_back(static_cast<T>(std::stod(item, &used)));
      } else {
        const double v = std::stod(item, &used);
        if (v < 0 || v != std::floor(v)) throw std::invalid_argument(item);
        out.push_back(static_cast<T>(v));
      }
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::logic_error&) {
      throw ConfigError(std::string("bad value '") + item + "' in " + flag);
    }
    pos = next + 1;
  }
  return out;
}

// ---- generate -------------------------------------------------------------

struct GenerateArgs {
  std::string spec;
  std::string preset;
  std::size_t n = 1000;
  std::uint64_t seed = 0;
  double exponent = 1.2;
  std::string out;
};

int cmd_generate(const GenerateArgs& a, CLI::App& sub, std::ostream& out) {
  ScenarioSpec spec;
  if (!a.spec.empty()) {
    spec = load_scenario(a.spec);
    if (sub.count("--seed") > 0) spec.seed = a.seed;
    if (sub.count("--n") > 0) spec.n = a.n;
  } else {
    spec = preset_scenario(a.preset, a.n, a.seed, a.exponent);
  }
  const Generated g = generate(spec);
  const fs::path dir(a.out);
  ensure_dir(dir);
  std::vector<std::string> names;
  for (std::size_t i = 0; i < g.data.m(); ++i) {
    names.push_back("view_" + std::to_string(i) + ".shv");
    write_view_file(g.data.view(i), dir / names.back());
  }
  write_manifest(names, dir / "manifest.json");
  write_params(g.truth, dir / "truth.json");
  write_view_file(g.sources, dir / "sources.shv");
  {
    std::ofstream s(dir / "scenario.json", std::ios::trunc);
    if (!s) throw IoError("cannot write " + (dir / "scenario.json").string());
    s << scenario_to_json_text(spec) << '\n';
  }
  out << "wrote " << g.data.m() << " views of " << g.data.p() << "x" << g.data.n() << " to " << dir.string() << '\n';
  return kExitOk;
}

// ---- fit ------------------------------------------------------------------

struct FitArgs {
  std::string manifest;
  std::string algo = "shica-j";
  std::string init = "shica-j";
  int max_iter = -1;
  double tol = -1.0;
  unsigned threads = 0;
  std::uint64_t seed = 0;
  std::string out;
  std::string scaling_rule = "exact";
  bool no_center = false;
};

json mcca_json(const MccaFit& f) {
  return {{"gap", f.gap},
          {"top_eigenvalues", to_json(f.top_eigenvalues)},
          {"eigenvalues", to_json(f.eigenvalues)},
          {"min_top_spacing", number_or_null(f.min_top_spacing)}};
}

int cmd_fit(const FitArgs& a, std::ostream& out) {
  const MultiViewData data = load_manifest(a.manifest);
  FitConfig cfg;
  cfg.algo = parse_algo(a.algo);
  cfg.centered = !a.no_center;
  if (a.scaling_rule == "appendix") {
    cfg.shica_j.scaling.rule = ScalingRule::appendix;
  } else if (a.scaling_rule != "exact") {
    throw ConfigError("--scaling-rule must be 'exact' or 'appendix'");
  }
  if (a.max_iter >= 0) {
    cfg.shica_j.em.max_iter = a.max_iter;
    cfg.shica_ml.max_iter = a.max_iter;
  }
  if (a.tol >= 0.0) {
    cfg.shica_j.em.tol = a.tol;
    cfg.shica_ml.tol = a.tol;
  }
  cfg.shica_ml.init_options = cfg.shica_j;
  if (a.init == "shica-j") {
    cfg.ml_init.kind = MlInitKind::shica_j;
  } else if (a.init == "random") {
    cfg.ml_init.kind = MlInitKind::random;
    cfg.ml_init.seed = a.seed;
  } else {
    const ModelParams p0 = read_params(a.init);
    const ModelParams w0 = p0.direction == Direction::unmixing ? p0 : p0.inverted();
    cfg.ml_init.kind = MlInitKind::given;
    cfg.ml_init.unmixing = w0.matrices;
    cfg.ml_init.noise_vars = w0.noise_vars;
  }
  if (data.m() < 3) out << "warning: fewer than 3 views; the model may not be identifiable\n";

  const FitOutcome fit = fit_algorithm(data, cfg);

  const fs::path dir(a.out);
  ensure_dir(dir);
  write_params(fit.params(), dir / "params.json");

  json diag = {{"algo", a.algo},
               {"m", data.m()},
               {"p", data.p()},
               {"n", data.n()},
               {"centered", cfg.centered},
               {"threads", a.threads == 0 ? default_threads() : a.threads},
               {"wall_time_seconds", fit.wall_time_seconds}};
  std::vector<std::string> warnings;
  if (fit.mcca) {
    diag["mcca"] = mcca_json(*fit.mcca);
    warnings = fit.mcca->warnings;
  }
  if (fit.shica_j) {
    const auto& d = fit.shica_j->diagnostics;
    diag["mcca_gap"] = d.mcca_gap;
    diag["mcca_eigenvalues"] = to_json(d.mcca_eigenvalues);
    diag["jd_iterations"] = d.jd_iterations;
    diag["jd_converged"] = d.jd_converged;
    diag["scaling_iterations"] = d.scaling_sweeps;
    diag["scaling_converged"] = d.scaling_converged;
    diag["scaling_rule"] = a.scaling_rule;
    diag["em_loglik_trace"] = d.em_loglik_trace;
    warnings = d.warnings;
  }
  if (fit.shica_ml) {
    const auto& st = *fit.shica_ml;
    diag["init"] = a.init;
    diag["iterations"] = st.iterations;
    diag["converged"] = st.converged;
    diag["stalls"] = st.stalls;
    diag["monotonicity_violations"] = st.monotonicity_violations;
    diag["mixture_vars"] = st.mixture_vars;
    diag["loglik_trace"] = st.loglik_trace;
    if (st.monotonicity_violations > 0) warnings.push_back("observed log-likelihood decreased in some iterations");
    if (!st.converged) warnings.push_back("did not converge within max_iter");
  }
  diag["warnings"] = warnings;
  write_json(diag, dir / "diagnostics.json");
  for (const auto& w : warnings) out << "warning: " << w << '\n';
  out << a.algo << " fit in " << fit.wall_time_seconds << " s, wrote " << (dir / "params.json").string() << '\n';
  return kExitOk;
}

// ---- infer ----------------------------------------------------------------

struct InferArgs {
  std::string manifest;
  std::string params;
  std::string posterior = "gaussian";
  bool no_center = false;
  std::string out;
};

int cmd_infer(const InferArgs& a, std::ostream& out) {
  MultiViewData data = load_manifest(a.manifest);
  if (!a.no_center) data = data.centered();
  const ModelParams p0 = read_params(a.params);
  const ModelParams w = p0.direction == Direction::unmixing ? p0 : p0.inverted();
  const MultiViewData y = data.transformed(w.matrices);
  Matrix mean;
  if (a.posterior == "gaussian") {
    mean = mmse_gaussian(y, w.noise_vars).mean;
  } else if (a.posterior == "mixture") {
    mean = estep_ml(y, w.noise_vars).mean;
  } else {
    throw ConfigError("--posterior must be 'gaussian' or 'mixture'");
  }
  write_view_file(mean, a.out);
  out << "wrote " << mean.rows() << "x" << mean.cols() << " shared components to " << a.out << '\n';
  return kExitOk;
}

// ---- eval -----------------------------------------------------------------

struct EvalArgs {
  std::string estimate;
  std::string truth;
  std::string out;
};

void emit(const json& doc, const std::string& path, std::ostream& out) {
  if (!path.empty()) write_json(doc, path);
  out << doc.dump(2) << '\n';
}

int cmd_eval_amari(const EvalArgs& a, std::ostream& out) {
  const ModelParams est = read_params(a.estimate);
  const ModelParams truth = read_params(a.truth);
  const auto W = est.direction == Direction::unmixing ? est.matrices : est.inverted().matrices;
  const auto A = truth.direction == Direction::mixing ? truth.matrices : truth.inverted().matrices;
  if (W.size() != A.size()) throw ShapeError("estimate and truth have different view counts");
  json per = json::array();
  for (std::size_t i = 0; i < W.size(); ++i) per.push_back(amari_distance(W[i], A[i]));
  emit({{"metric", "amari"}, {"per_view", per}, {"mean", mean_amari_distance(W, A)}}, a.out, out);
  return kExitOk;
}

int cmd_eval_r2(const EvalArgs& a, std::ostream& out) {
  const R2Score s = r2_score(read_view_file(a.estimate), read_view_file(a.truth));
  json per = json::array();
  for (Eigen::Index k = 0; k < s.per_row.size(); ++k) per.push_back(number_or_null(s.per_row(k)));
  emit({{"metric", "r2"}, {"per_row", per}, {"mean", number_or_null(s.mean)}}, a.out, out);
  return kExitOk;
}

int cmd_eval_match(const EvalArgs& a, std::ostream& out) {
  const ComponentMatch cm = match_components(read_view_file(a.estimate), read_view_file(a.truth));
  emit({{"metric", "match"},
        {"est_for_ref", cm.est_for_ref},
        {"signs", cm.signs},
        {"distances", to_json(cm.distances)},
        {"total", cm.total}},
       a.out, out);
  return kExitOk;
}

// ---- bench ----------------------------------------------------------------

struct PerturbationArgs {
  std::string gaps = "1e-4,1e-2,1";
  std::string deltas = "1e-6,1e-5,1e-4,1e-3,1e-2,3e-2,1e-1";
  std::size_t seeds = 50;
  std::uint64_t seed = 0;
  unsigned threads = 0;
  std::string out;
  std::string summary;
};

int cmd_bench_perturbation(const PerturbationArgs& a, std::ostream& out) {
  PerturbationConfig cfg;
  cfg.gaps = parse_list<double>(a.gaps, "--gaps");
  cfg.deltas = parse_list<double>(a.deltas, "--deltas");
  cfg.seeds = a.seeds;
  cfg.base_seed = a.seed;
  cfg.threads = a.threads == 0 ? default_threads() : a.threads;
  const PerturbationResult res = run_perturbation_bench(cfg);
  const fs::path path(a.out);
  fs::path summary(a.summary);
  if (summary.empty()) summary = path.parent_path() / (path.stem().string() + "_summary.csv");
  write_perturbation_csv(res.records, path);
  write_perturbation_summary_csv(res.cells, summary);
  out << "wrote " << res.records.size() << " records to " << path.string() << " and " << res.cells.size() << " cells to "
      << summary.string() << '\n';
  return kExitOk;
}

struct SeparationArgs {
  std::string scenario = "gauss";
  std::string ns = "1000,10000,100000";
  std::size_t seeds = 20;
  std::string algos = "mcca,shica-j,shica-ml";
  std::uint64_t seed = 0;
  unsigned threads = 0;
  int max_iter = 10000;
  double tol = 1e-9;
  double exponent = 1.2;
  std::string out;
};

int cmd_bench_separation(const SeparationArgs& a, std::ostream& out) {
  SeparationConfig cfg;
  cfg.scenario = a.scenario;
  cfg.ns = parse_list<std::size_t>(a.ns, "--n");
  cfg.seeds = a.seeds;
  cfg.base_seed = a.seed;
  cfg.threads = a.threads == 0 ? default_threads() : a.threads;
  cfg.ml_max_iter = a.max_iter;
  cfg.ml_tol = a.tol;
  cfg.exponent = a.exponent;
  cfg.algos.clear();
  std::string rest = a.algos;
  for (std::size_t pos = 0; pos <= rest.size();) {
    const std::size_t next = std::min(rest.find(',', pos), rest.size());
    cfg.algos.push_back(parse_algo(rest.substr(pos, next - pos)));
    pos = next + 1;
  }
  const auto recs = run_separation_bench(cfg);
  write_separation_csv(recs, a.out);
  std::size_t failed = 0;
  for (const auto& r : recs) failed += r.status != "ok";
  out << "wrote " << recs.size() << " records (" << failed << " failed) to " << a.out << '\n';
  return kExitOk;
}

// ---- import-csv -----------------------------------------------------------

struct ImportArgs {
  std::string csv;
  std::string out;
  bool transpose = false;
};

int cmd_import_csv(const ImportArgs& a, std::ostream& out) {
  Matrix mtx = read_csv_matrix(a.csv);
  if (a.transpose) mtx.transposeInPlace();
  write_view_file(mtx, a.out);
  out << "wrote " << mtx.rows() << "x" << mtx.cols() << " to " << a.out << '\n';
  return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Shared ICA: multi-view source separation with MCCA, ShICA-J and ShICA-ML"};
  app.name("shica");
  app.require_subcommand(1);

  GenerateArgs gen;
  auto* g = app.add_subcommand("generate", "Draw a synthetic multi-view dataset");
  auto* g_spec = g->add_option("--spec", gen.spec, "Scenario JSON file")->check(CLI::ExistingFile);
  g->add_option("--preset", gen.preset, "Preset scenario: gauss, nongauss, hybrid, power, permuted")->excludes(g_spec);
  g->add_option("--n", gen.n, "Sample count (preset, or override for --spec)");
  g->add_option("--seed", gen.seed, "Random seed");
  g->add_option("--exponent", gen.exponent, "Exponent of the power preset");
  g->add_option("--out", gen.out, "Output directory")->required();

  FitArgs fit;
  auto* f = app.add_subcommand("fit", "Fit unmixing matrices and noise variances");
  f->add_option("--manifest", fit.manifest, "Manifest JSON listing the views")->required();
  f->add_option("--algo", fit.algo, "mcca, shica-j or shica-ml")->check(CLI::IsMember({"mcca", "shica-j", "shica-ml"}));
  f->add_option("--init", fit.init, "shica-ml initialization: shica-j, random or a params JSON file");
  f->add_option("--max-iter", fit.max_iter, "Iteration budget (shica-ml outer loop, shica-j noise EM)");
  f->add_option("--tol", fit.tol, "Relative log-likelihood tolerance");
  f->add_option("--threads", fit.threads, "Thread budget (recorded in diagnostics)");
  f->add_option("--seed", fit.seed, "Seed for --init random");
  f->add_option("--scaling-rule", fit.scaling_rule, "exact or appendix");
  f->add_flag("--no-center", fit.no_center, "Skip per-row mean removal");
  f->add_option("--out", fit.out, "Output directory")->required();

  InferArgs inf;
  auto* in = app.add_subcommand("infer", "Posterior mean of the shared components");
  in->add_option("--manifest", inf.manifest, "Manifest JSON listing the views")->required();
  in->add_option("--params", inf.params, "Fitted params JSON")->required();
  in->add_option("--posterior", inf.posterior, "gaussian or mixture");
  in->add_flag("--no-center", inf.no_center, "Skip per-row mean removal");
  in->add_option("--out", inf.out, "Output .shv file")->required();

  auto* ev = app.add_subcommand("eval", "Evaluate estimates");
  ev->require_subcommand(1);
  EvalArgs ea, er, em;
  auto* e_amari = ev->add_subcommand("amari", "Amari distance between estimated unmixing and true mixing");
  e_amari->add_option("--estimate", ea.estimate, "Estimated params JSON")->required();
  e_amari->add_option("--truth", ea.truth, "True params JSON")->required();
  e_amari->add_option("--out", ea.out, "Optional JSON output file");
  auto* e_r2 = ev->add_subcommand("r2", "R2 score of predicted rows against truth");
  e_r2->add_option("--predicted", er.estimate, "Predicted .shv")->required();
  e_r2->add_option("--truth", er.truth, "True .shv")->required();
  e_r2->add_option("--out", er.out, "Optional JSON output file");
  auto* e_match = ev->add_subcommand("match", "Optimal sign/permutation matching of component rows");
  e_match->add_option("--estimate", em.estimate, "Estimated components .shv")->required();
  e_match->add_option("--reference", em.truth, "Reference components .shv")->required();
  e_match->add_option("--out", em.out, "Optional JSON output file");

  auto* b = app.add_subcommand("bench", "Benchmark sweeps");
  b->require_subcommand(1);
  PerturbationArgs bp;
  auto* b_pert = b->add_subcommand("perturbation", "MCCA vs joint-diagonalization under covariance perturbation");
  b_pert->add_option("--gaps", bp.gaps, "Comma-separated eigen-gaps");
  b_pert->add_option("--deltas", bp.deltas, "Comma-separated perturbation scales");
  b_pert->add_option("--seeds", bp.seeds, "Repetitions per cell");
  b_pert->add_option("--seed", bp.seed, "Base seed");
  b_pert->add_option("--threads", bp.threads, "Worker threads (default: all cores)");
  b_pert->add_option("--out", bp.out, "Per-run CSV")->required();
  b_pert->add_option("--summary", bp.summary, "Median CSV (default: <out>_summary.csv)");
  SeparationArgs bs;
  auto* b_sep = b->add_subcommand("separation", "Separation accuracy and timing versus sample size");
  b_sep->add_option("--scenario", bs.scenario, "gauss, nongauss, hybrid, power or permuted");
  b_sep->add_option("--n", bs.ns, "Comma-separated sample sizes");
  b_sep->add_option("--seeds", bs.seeds, "Repetitions per sample size");
  b_sep->add_option("--algos", bs.algos, "Comma-separated algorithms");
  b_sep->add_option("--seed", bs.seed, "Base seed");
  b_sep->add_option("--threads", bs.threads, "Worker threads (default: all cores)");
  b_sep->add_option("--max-iter", bs.max_iter, "shica-ml iteration budget");
  b_sep->add_option("--tol", bs.tol, "shica-ml tolerance");
  b_sep->add_option("--exponent", bs.exponent, "Exponent of the power scenario");
  b_sep->add_option("--out", bs.out, "Output CSV")->required();

  ImportArgs im;
  auto* imp = app.add_subcommand("import-csv", "Convert a numeric CSV (one row per line) into a .shv view");
  imp->add_option("--csv", im.csv, "Input CSV")->required();
  imp->add_option("--out", im.out, "Output .shv")->required();
  imp->add_flag("--transpose", im.transpose, "Store the transpose (samples in rows on input)");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  }

  try {
    if (*g) {
      if (gen.spec.empty() && gen.preset.empty()) throw ConfigError("generate needs --spec or --preset");
      return cmd_generate(gen, *g, out);
    }
    if (*f) return cmd_fit(fit, out);
    if (*in) return cmd_infer(inf, out);
    if (*e_amari) return cmd_eval_amari(ea, out);
    if (*e_r2) return cmd_eval_r2(er, out);
    if (*e_match) return cmd_eval_match(em, out);
    if (*b_pert) return cmd_bench_perturbation(bp, out);
    if (*b_sep) return cmd_bench_separation(bs, out);
    if (*imp) return cmd_import_csv(im, out);
  } catch (const NumericalError& e) {
    err << "numerical failure in stage '" << (e.stage().empty() ? "unknown" : e.stage()) << "': " << e.what() << '\n';
    return kExitNumerical;
  } catch (const IoError& e) {
    err << "I/O error: " << e.what() << '\n';
    return kExitIo;
  } catch (const FormatError& e) {
    err << "format error: " << e.what() << '\n';
    return kExitIo;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  }
  return kExitUsage;
}

}  // namespace shica::cli
