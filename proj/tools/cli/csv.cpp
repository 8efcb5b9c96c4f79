#include "cli/csv.hpp"

#include "shica/errors.hpp"

#include <fstream>
#include <iomanip>
#include <limits>

namespace shica::cli {

namespace {

std::ofstream open_csv(const std::filesystem::path& path, std::string_view schema, std::string_view columns) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << std::setprecision(std::numeric_limits<double>::max_digits10);
  out << schema << '\n' << columns << '\n';
  return out;
}

// Status strings may hold commas from error messages.
std::string quoted(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string q = "\"";
  for (char c : s) {
    if (c == '"') q += '"';
    q += c == '\n' ? ' ' : c;
  }
  return q + '"';
}

void finish(std::ofstream& out, const std::filesystem::path& path) {
  out.flush();
  if (!out) throw IoError("write failed for " + path.string());
}

}  // namespace

void write_perturbation_csv(const std::vector<PerturbationRecord>& recs, const std::filesystem::path& path) {
  auto out = open_csv(path, kPerturbationSchema, "gap,delta,seed,method,amari,status");
  for (const auto& r : recs)
    out << r.gap << ',' << r.delta << ',' << r.seed << ',' << r.method << ',' << r.amari << ',' << quoted(r.status) << '\n';
  finish(out, path);
}

void write_perturbation_summary_csv(const std::vector<PerturbationCell>& cells, const std::filesystem::path& path) {
  auto out = open_csv(path, kPerturbationSummarySchema, "gap,delta,median_raw,median_corrected,runs");
  for (const auto& c : cells) out << c.gap << ',' << c.delta << ',' << c.median_raw << ',' << c.median_corrected << ',' << c.runs << '\n';
  finish(out, path);
}

void write_separation_csv(const std::vector<SeparationRecord>& recs, const std::filesystem::path& path) {
  auto out = open_csv(path, kSeparationSchema, "scenario,algo,seed,n,amari,wall_time_seconds,status,threads,iterations");
  for (const auto& r : recs)
    out << r.scenario << ',' << r.algo << ',' << r.seed << ',' << r.n << ',' << r.amari << ',' << r.wall_time_seconds << ','
        << quoted(r.status) << ',' << r.threads << ',' << r.iterations << '\n';
  finish(out, path);
}

}  // namespace shica::cli
