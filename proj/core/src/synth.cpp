#include "shica/synth.hpp"

#include "shica/errors.hpp"
#include "shica/gev.hpp"
#include "shica/rng.hpp"
#include "json_util.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

namespace shica {

using nlohmann::json;

namespace {

constexpr std::uint64_t kMixingStream = 1;
constexpr std::uint64_t kNoiseVarStream = 2;
constexpr std::uint64_t kSourceStream = 3;
constexpr std::uint64_t kNoiseStream = 4;

const char* kind_name(SourceKind k) {
  switch (k) {
    case SourceKind::gaussian: return "gaussian";
    case SourceKind::laplace: return "laplace";
    case SourceKind::power: return "power";
  }
  return "?";
}

const char* scheme_name(NoiseScheme s) {
  switch (s) {
    case NoiseScheme::diverse_uniform: return "diverse_uniform";
    case NoiseScheme::equal: return "equal";
    case NoiseScheme::permuted_pair: return "permuted_pair";
    case NoiseScheme::target_eigvals: return "target_eigvals";
    case NoiseScheme::hybrid: return "hybrid";
  }
  return "?";
}

SourceSpec source_from_json(const json& j) {
  SourceSpec s;
  std::string kind;
  if (j.is_string()) {
    kind = j.get<std::string>();
  } else if (j.is_object() && j.contains("kind") && j["kind"].is_string()) {
    kind = j["kind"].get<std::string>();
    if (j.contains("exponent")) {
      if (!j["exponent"].is_number()) throw ConfigError("field 'sources[].exponent' must be a number");
      s.exponent = j["exponent"].get<double>();
    }
  } else {
    throw ConfigError("field 'sources' entries must be a kind string or {\"kind\": ...}");
  }
  if (kind == "gaussian") {
    s.kind = SourceKind::gaussian;
  } else if (kind == "laplace") {
    s.kind = SourceKind::laplace;
  } else if (kind == "power" || kind == "power_nongaussian") {
    s.kind = SourceKind::power;
  } else {
    throw ConfigError("field 'sources': unknown kind '" + kind + "'");
  }
  return s;
}

std::size_t count_field(const json& doc, const char* name) {
  if (!doc.contains(name)) throw ConfigError(std::string("missing field '") + name + "'");
  const auto& v = doc[name];
  if (!v.is_number_integer() || v.get<long long>() < 1) throw ConfigError(std::string("field '") + name + "' must be a positive integer");
  return static_cast<std::size_t>(v.get<long long>());
}

// E[x^2 |x|^(2a-2)] for x ~ N(0, 1)
double power_second_moment(double a) { return std::pow(2.0, a) * std::tgamma(a + 0.5) / std::sqrt(std::numbers::pi); }

Matrix mixing_matrix(std::size_t p, CounterRng& rng) {
  const auto pp = static_cast<Eigen::Index>(p);
  Matrix a(pp, pp);
  do {
    for (Eigen::Index c = 0; c < pp; ++c)
      for (Eigen::Index r = 0; r < pp; ++r) a(r, c) = rng.normal();
  } while (!(std::abs(a.determinant()) > 1e-3 * static_cast<double>(p)));
  return a;
}

Matrix noise_variances(const ScenarioSpec& spec, CounterRng& rng) {
  const auto m = static_cast<Eigen::Index>(spec.m);
  const auto p = static_cast<Eigen::Index>(spec.p);
  const auto& ns = spec.noise;
  Matrix s(m, p);
  // Diverse schemes draw the noise standard deviation uniformly.
  auto std_draw = [&] {
    const double sd = rng.uniform(ns.low, ns.high);
    return sd * sd;
  };
  switch (ns.scheme) {
    case NoiseScheme::diverse_uniform:
      for (Eigen::Index j = 0; j < p; ++j)
        for (Eigen::Index i = 0; i < m; ++i) s(i, j) = std_draw();
      break;
    case NoiseScheme::equal:
      s.setConstant(ns.sigma);
      break;
    case NoiseScheme::permuted_pair:
      for (Eigen::Index j = 0; j < p; j += 2) {
        for (Eigen::Index i = 0; i < m; ++i) s(i, j) = std_draw();
        if (j + 1 < p)
          for (Eigen::Index i = 0; i < m; ++i) s(i, j + 1) = s((i + 1) % m, j);
      }
      break;
    case NoiseScheme::target_eigvals:
      for (Eigen::Index j = 0; j < p; ++j) {
        const double lambda = ns.eigenvalues[static_cast<std::size_t>(j)];
        if (ns.equal_views) {
          s.col(j).setConstant(variance_for_eigenvalue(spec.m, lambda));
        } else {
          Vector profile(m);
          for (Eigen::Index i = 0; i < m; ++i)
            profile(i) = ns.log_profile ? std::exp(rng.uniform(std::log(ns.low), std::log(ns.high))) : rng.uniform(ns.low, ns.high);
          s.col(j) = scale_to_eigenvalue(profile, lambda);
        }
      }
      break;
    case NoiseScheme::hybrid:
      for (Eigen::Index j = 0; j < p; ++j) {
        const bool gaussian = spec.sources[static_cast<std::size_t>(j)].kind == SourceKind::gaussian;
        for (Eigen::Index i = 0; i < m; ++i) s(i, j) = gaussian ? std_draw() : ns.sigma;
      }
      break;
  }
  return s;
}

}  // namespace

void ScenarioSpec::validate() const {
  if (m < 1) throw ConfigError("field 'm' must be >= 1");
  if (p < 1) throw ConfigError("field 'p' must be >= 1");
  if (n < 1) throw ConfigError("field 'n' must be >= 1");
  if (sources.size() != p) throw ConfigError("field 'sources' must list p entries");
  for (const auto& s : sources)
    if (s.kind == SourceKind::power && !(s.exponent > 0.0)) throw ConfigError("field 'sources[].exponent' must be > 0");
  if (noise.scheme == NoiseScheme::diverse_uniform || noise.scheme == NoiseScheme::permuted_pair || noise.scheme == NoiseScheme::hybrid ||
      (noise.scheme == NoiseScheme::target_eigvals && !noise.equal_views)) {
    if (!(noise.low >= 0.0) || !(noise.high > noise.low)) throw ConfigError("field 'noise.low/high' must satisfy 0 <= low < high");
    if (noise.scheme == NoiseScheme::target_eigvals && noise.log_profile && !(noise.low > 0.0))
      throw ConfigError("field 'noise.low' must be > 0 with log_profile");
  }
  if ((noise.scheme == NoiseScheme::equal || noise.scheme == NoiseScheme::hybrid) && !(noise.sigma >= 0.0))
    throw ConfigError("field 'noise.sigma' must be >= 0");
  if (noise.scheme == NoiseScheme::target_eigvals) {
    if (noise.eigenvalues.size() != p) throw ConfigError("field 'noise.eigenvalues' must list p entries");
    for (double l : noise.eigenvalues)
      if (!(l > 1.0) || l > static_cast<double>(m)) throw ConfigError("field 'noise.eigenvalues' entries must lie in (1, m]");
  }
}

ScenarioSpec scenario_from_json_text(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("invalid scenario JSON: ") + e.what());
  }
  if (!doc.is_object()) throw ConfigError("scenario must be a JSON object");
  ScenarioSpec spec;
  spec.m = count_field(doc, "m");
  spec.p = count_field(doc, "p");
  spec.n = count_field(doc, "n");
  if (doc.contains("seed")) {
    if (!doc["seed"].is_number_integer()) throw ConfigError("field 'seed' must be an integer");
    spec.seed = doc["seed"].get<std::uint64_t>();
  }

  if (!doc.contains("sources")) throw ConfigError("missing field 'sources'");
  const auto& src = doc["sources"];
  if (src.is_array()) {
    for (const auto& s : src) spec.sources.push_back(source_from_json(s));
  } else {
    spec.sources.assign(spec.p, source_from_json(src));
  }

  if (!doc.contains("noise") || !doc["noise"].is_object()) throw ConfigError("missing object field 'noise'");
  const auto& nz = doc["noise"];
  if (!nz.contains("scheme") || !nz["scheme"].is_string()) throw ConfigError("missing field 'noise.scheme'");
  const auto scheme = nz["scheme"].get<std::string>();
  if (scheme == "diverse_uniform") {
    spec.noise.scheme = NoiseScheme::diverse_uniform;
  } else if (scheme == "equal") {
    spec.noise.scheme = NoiseScheme::equal;
  } else if (scheme == "permuted_pair") {
    spec.noise.scheme = NoiseScheme::permuted_pair;
  } else if (scheme == "target_eigvals") {
    spec.noise.scheme = NoiseScheme::target_eigvals;
  } else if (scheme == "hybrid") {
    spec.noise.scheme = NoiseScheme::hybrid;
  } else {
    throw ConfigError("field 'noise.scheme': unknown scheme '" + scheme + "'");
  }
  auto number = [&](const char* key, double& out) {
    if (!nz.contains(key)) return;
    if (!nz[key].is_number()) throw ConfigError(std::string("field 'noise.") + key + "' must be a number");
    out = nz[key].get<double>();
  };
  number("low", spec.noise.low);
  number("high", spec.noise.high);
  number("sigma", spec.noise.sigma);
  if (nz.contains("equal_views")) {
    if (!nz["equal_views"].is_boolean()) throw ConfigError("field 'noise.equal_views' must be a boolean");
    spec.noise.equal_views = nz["equal_views"].get<bool>();
  }
  if (nz.contains("log_profile")) {
    if (!nz["log_profile"].is_boolean()) throw ConfigError("field 'noise.log_profile' must be a boolean");
    spec.noise.log_profile = nz["log_profile"].get<bool>();
  }
  if (nz.contains("eigenvalues")) {
    if (!nz["eigenvalues"].is_array()) throw ConfigError("field 'noise.eigenvalues' must be an array");
    for (const auto& v : nz["eigenvalues"]) {
      if (!v.is_number()) throw ConfigError("field 'noise.eigenvalues' must hold numbers");
      spec.noise.eigenvalues.push_back(v.get<double>());
    }
  }
  spec.validate();
  return spec;
}

ScenarioSpec load_scenario(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open scenario file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return scenario_from_json_text(ss.str());
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

std::string scenario_to_json_text(const ScenarioSpec& spec) {
  json doc;
  doc["m"] = spec.m;
  doc["p"] = spec.p;
  doc["n"] = spec.n;
  doc["seed"] = spec.seed;
  doc["sources"] = json::array();
  for (const auto& s : spec.sources) {
    if (s.kind == SourceKind::power) {
      doc["sources"].push_back({{"kind", kind_name(s.kind)}, {"exponent", s.exponent}});
    } else {
      doc["sources"].push_back(kind_name(s.kind));
    }
  }
  json nz;
  nz["scheme"] = scheme_name(spec.noise.scheme);
  nz["low"] = spec.noise.low;
  nz["high"] = spec.noise.high;
  nz["sigma"] = spec.noise.sigma;
  if (!spec.noise.eigenvalues.empty()) nz["eigenvalues"] = spec.noise.eigenvalues;
  if (spec.noise.scheme == NoiseScheme::target_eigvals) {
    nz["equal_views"] = spec.noise.equal_views;
    nz["log_profile"] = spec.noise.log_profile;
  }
  doc["noise"] = nz;
  return doc.dump(2);
}

ScenarioSpec preset_scenario(const std::string& name, std::size_t n, std::uint64_t seed, double exponent) {
  ScenarioSpec spec;
  spec.m = 5;
  spec.p = 4;
  spec.n = n;
  spec.seed = seed;
  if (name == "gauss") {
    spec.sources.assign(spec.p, {SourceKind::gaussian, 1.0});
    spec.noise.scheme = NoiseScheme::diverse_uniform;
  } else if (name == "nongauss") {
    spec.sources.assign(spec.p, {SourceKind::laplace, 1.0});
    spec.noise.scheme = NoiseScheme::equal;
  } else if (name == "hybrid") {
    spec.sources = {{SourceKind::gaussian, 1.0}, {SourceKind::gaussian, 1.0}, {SourceKind::laplace, 1.0}, {SourceKind::laplace, 1.0}};
    spec.noise.scheme = NoiseScheme::hybrid;
  } else if (name == "power") {
    spec.sources.assign(spec.p, {SourceKind::power, exponent});
    spec.noise.scheme = NoiseScheme::diverse_uniform;
  } else if (name == "permuted") {
    spec.sources.assign(spec.p, {SourceKind::laplace, 1.0});
    spec.noise.scheme = NoiseScheme::permuted_pair;
  } else {
    throw ConfigError("unknown scenario preset '" + name + "'");
  }
  spec.validate();
  return spec;
}

double variance_for_eigenvalue(std::size_t m, double lambda) {
  if (!(lambda > 1.0) || lambda > static_cast<double>(m)) throw DataError("target eigenvalue must lie in (1, m]");
  return (static_cast<double>(m) - lambda) / (lambda - 1.0);
}

Vector scale_to_eigenvalue(const Vector& profile, double lambda) {
  const double m = static_cast<double>(profile.size());
  if (!(lambda > 1.0) || lambda > m) throw DataError("target eigenvalue must lie in (1, m]");
  if ((profile.array() < 0.0).any() || !(profile.maxCoeff() > 0.0)) throw DataError("variance profile must be nonnegative and not all zero");
  if (lambda == m) return Vector::Zero(profile.size());
  // The root decreases from m to 1 as the scale grows; bisect on log scale.
  double lo = -60.0;
  double hi = 60.0;
  for (int it = 0; it < 200 && hi - lo > 1e-14; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (secular_root(std::exp(mid) * profile) > lambda) lo = mid; else hi = mid;
  }
  return std::exp(0.5 * (lo + hi)) * profile;
}

ModelParams draw_model(const ScenarioSpec& spec) {
  spec.validate();
  CounterRng mix_rng(spec.seed, kMixingStream);
  CounterRng var_rng(spec.seed, kNoiseVarStream);
  ModelParams truth;
  truth.direction = Direction::mixing;
  for (std::size_t i = 0; i < spec.m; ++i) truth.matrices.push_back(mixing_matrix(spec.p, mix_rng));
  const Matrix s = noise_variances(spec, var_rng);
  for (std::size_t i = 0; i < spec.m; ++i) truth.noise_vars.emplace_back(s.row(static_cast<Eigen::Index>(i)).transpose());
  return truth;
}

Generated generate(const ScenarioSpec& spec) {
  Generated out;
  out.truth = draw_model(spec);
  const auto p = static_cast<Eigen::Index>(spec.p);
  const auto n = static_cast<Eigen::Index>(spec.n);

  CounterRng src_rng(spec.seed, kSourceStream);
  out.sources.resize(p, n);
  for (Eigen::Index j = 0; j < p; ++j) {
    const auto& kind = spec.sources[static_cast<std::size_t>(j)];
    const double power_scale = kind.kind == SourceKind::power ? 1.0 / std::sqrt(power_second_moment(kind.exponent)) : 1.0;
    for (Eigen::Index t = 0; t < n; ++t) {
      switch (kind.kind) {
        case SourceKind::gaussian:
          out.sources(j, t) = src_rng.normal();
          break;
        case SourceKind::laplace:
          out.sources(j, t) = src_rng.laplace(1.0 / std::sqrt(2.0));
          break;
        case SourceKind::power: {
          const double x = src_rng.normal();
          out.sources(j, t) = power_scale * x * std::pow(std::abs(x), kind.exponent - 1.0);
          break;
        }
      }
    }
  }

  CounterRng noise_rng(spec.seed, kNoiseStream);
  std::vector<Matrix> views;
  views.reserve(spec.m);
  for (std::size_t i = 0; i < spec.m; ++i) {
    Matrix latent = out.sources;
    const Vector sd = out.truth.noise_vars[i].cwiseSqrt();
    for (Eigen::Index t = 0; t < n; ++t)
      for (Eigen::Index j = 0; j < p; ++j) latent(j, t) += sd(j) * noise_rng.normal();
    views.emplace_back(out.truth.matrices[i] * latent);
  }
  out.data = MultiViewData(std::move(views));
  return out;
}

}  // namespace shica
