#pragma once

#include "shica/errors.hpp"
#include "shica/types.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <fstream>

namespace shica::detail {

inline nlohmann::json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

inline void write_json_file(const nlohmann::json& doc, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << doc.dump(2) << '\n';
  if (!out) throw IoError("write failed for " + path.string());
}

// nlohmann serializes doubles with the shortest representation that round-trips.
inline nlohmann::json matrix_to_json(const Matrix& m) {
  auto rows = nlohmann::json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    auto row = nlohmann::json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

inline nlohmann::json vector_to_json(const Vector& v) {
  auto out = nlohmann::json::array();
  for (Eigen::Index k = 0; k < v.size(); ++k) out.push_back(v(k));
  return out;
}

inline Matrix matrix_from_json(const nlohmann::json& j) {
  if (!j.is_array() || j.empty() || !j.front().is_array()) throw FormatError("expected a non-empty nested array");
  const auto rows = static_cast<Eigen::Index>(j.size());
  const auto cols = static_cast<Eigen::Index>(j.front().size());
  Matrix m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    const auto& row = j[static_cast<std::size_t>(r)];
    if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != cols) throw ShapeError("ragged matrix in JSON");
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = row[static_cast<std::size_t>(c)].get<double>();
  }
  return m;
}

inline Vector vector_from_json(const nlohmann::json& j) {
  if (!j.is_array()) throw FormatError("expected an array");
  Vector v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t k = 0; k < j.size(); ++k) v(static_cast<Eigen::Index>(k)) = j[k].get<double>();
  return v;
}

}  // namespace shica::detail
