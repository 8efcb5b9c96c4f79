#include "shica/data_io.hpp"

#include "shica/errors.hpp"
#include "json_util.hpp"

#include <nlohmann/json.hpp>

#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <sstream>

namespace shica {

namespace fs = std::filesystem;

namespace {

constexpr std::array<unsigned char, 4> kMagic = {0x53, 0x48, 0x56, 0x31};

void put_u32(unsigned char* out, std::uint32_t v) {
  for (int k = 0; k < 4; ++k) out[k] = static_cast<unsigned char>(v >> (8 * k));
}

std::uint32_t get_u32(const unsigned char* in) {
  std::uint32_t v = 0;
  for (int k = 0; k < 4; ++k) v |= static_cast<std::uint32_t>(in[k]) << (8 * k);
  return v;
}

void put_f64(unsigned char* out, double x) {
  const auto bits = std::bit_cast<std::uint64_t>(x);
  for (int k = 0; k < 8; ++k) out[k] = static_cast<unsigned char>(bits >> (8 * k));
}

double get_f64(const unsigned char* in) {
  std::uint64_t bits = 0;
  for (int k = 0; k < 8; ++k) bits |= static_cast<std::uint64_t>(in[k]) << (8 * k);
  return std::bit_cast<double>(bits);
}

}  // namespace

MultiViewData::MultiViewData(std::vector<Matrix> views) : views_(std::move(views)) {
  for (std::size_t i = 1; i < views_.size(); ++i) {
    if (views_[i].rows() != views_[0].rows() || views_[i].cols() != views_[0].cols()) {
      throw ShapeError("view " + std::to_string(i) + " is " + std::to_string(views_[i].rows()) + "x" +
                       std::to_string(views_[i].cols()) + ", expected " + std::to_string(views_[0].rows()) +
                       "x" + std::to_string(views_[0].cols()));
    }
  }
}

MultiViewData MultiViewData::centered() const {
  std::vector<Matrix> out;
  out.reserve(views_.size());
  for (const auto& v : views_) {
    Matrix c = v;
    if (c.cols() > 0) c.colwise() -= Vector((v * Vector::Ones(v.cols())) / static_cast<double>(v.cols()));
    out.push_back(std::move(c));
  }
  return MultiViewData(std::move(out));
}

MultiViewData MultiViewData::transformed(const std::vector<Matrix>& per_view) const {
  if (per_view.size() != views_.size()) throw ShapeError("transform count does not match view count");
  std::vector<Matrix> out;
  out.reserve(views_.size());
  for (std::size_t i = 0; i < views_.size(); ++i) out.emplace_back(per_view[i] * views_[i]);
  return MultiViewData(std::move(out));
}

void ModelParams::validate() const {
  if (matrices.empty()) throw ShapeError("model has no views");
  if (noise_vars.size() != matrices.size()) throw ShapeError("noise_vars count does not match matrix count");
  const auto p = matrices.front().rows();
  for (std::size_t i = 0; i < matrices.size(); ++i) {
    if (matrices[i].rows() != p || matrices[i].cols() != p) throw ShapeError("matrix " + std::to_string(i) + " is not p x p");
    if (noise_vars[i].size() != p) throw ShapeError("noise_vars " + std::to_string(i) + " has wrong length");
    if (!matrices[i].allFinite() || !noise_vars[i].allFinite()) throw DataError("non-finite parameter in view " + std::to_string(i));
    if ((noise_vars[i].array() <= 0.0).any()) throw DataError("noise variances must be strictly positive");
    if (!(std::abs(matrices[i].determinant()) > 0.0)) throw NumericalError("matrix " + std::to_string(i) + " is singular");
  }
}

ModelParams ModelParams::inverted() const {
  ModelParams out;
  out.direction = direction == Direction::mixing ? Direction::unmixing : Direction::mixing;
  out.noise_vars = noise_vars;
  out.matrices.reserve(matrices.size());
  for (const auto& a : matrices) out.matrices.emplace_back(a.inverse());
  return out;
}

Matrix ModelParams::noise_matrix() const {
  Matrix out(static_cast<Eigen::Index>(noise_vars.size()), static_cast<Eigen::Index>(p()));
  for (std::size_t i = 0; i < noise_vars.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = noise_vars[i].transpose();
  return out;
}

Matrix read_view_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open view file " + path.string());
  std::array<unsigned char, kViewHeaderBytes> header{};
  in.read(reinterpret_cast<char*>(header.data()), header.size());
  if (in.gcount() != static_cast<std::streamsize>(header.size())) throw FormatError(path.string() + ": truncated header");
  if (!std::equal(kMagic.begin(), kMagic.end(), header.begin())) throw FormatError(path.string() + ": bad magic");
  if (get_u32(header.data() + 4) != 0) throw FormatError(path.string() + ": reserved bytes are not zero");
  const std::uint32_t rows = get_u32(header.data() + 8);
  const std::uint32_t cols = get_u32(header.data() + 12);

  const std::size_t count = static_cast<std::size_t>(rows) * cols;
  std::vector<unsigned char> payload(count * 8);
  in.read(reinterpret_cast<char*>(payload.data()), static_cast<std::streamsize>(payload.size()));
  if (static_cast<std::size_t>(in.gcount()) != payload.size()) throw FormatError(path.string() + ": truncated payload");
  if (in.peek() != std::char_traits<char>::eof()) throw FormatError(path.string() + ": trailing bytes after payload");

  Matrix m(rows, cols);
  for (std::uint32_t r = 0; r < rows; ++r) {
    for (std::uint32_t c = 0; c < cols; ++c) {
      const double v = get_f64(payload.data() + 8 * (static_cast<std::size_t>(r) * cols + c));
      if (!std::isfinite(v)) throw DataError(path.string() + ": non-finite value at (" + std::to_string(r) + ", " + std::to_string(c) + ")");
      m(r, c) = v;
    }
  }
  return m;
}

void write_view_file(const Matrix& m, const fs::path& path) {
  if (!m.allFinite()) throw DataError("refusing to write non-finite matrix to " + path.string());
  const auto rows = static_cast<std::size_t>(m.rows());
  const auto cols = static_cast<std::size_t>(m.cols());
  std::vector<unsigned char> buf(kViewHeaderBytes + rows * cols * 8, 0);
  std::copy(kMagic.begin(), kMagic.end(), buf.begin());
  put_u32(buf.data() + 8, static_cast<std::uint32_t>(rows));
  put_u32(buf.data() + 12, static_cast<std::uint32_t>(cols));
  unsigned char* out = buf.data() + kViewHeaderBytes;
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c, out += 8) put_f64(out, m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)));

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot open " + path.string() + " for writing");
  f.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  if (!f) throw IoError("write failed for " + path.string());
}

MultiViewData load_manifest(const fs::path& path) {
  const nlohmann::json doc = detail::read_json_file(path);
  if (!doc.is_object() || !doc.contains("views") || !doc["views"].is_array())
    throw FormatError(path.string() + ": manifest must be an object with a \"views\" array");
  const auto& list = doc["views"];
  if (list.empty()) throw FormatError(path.string() + ": manifest lists no views");

  const fs::path base = path.parent_path();
  std::vector<Matrix> views;
  views.reserve(list.size());
  for (const auto& entry : list) {
    if (!entry.is_string()) throw FormatError(path.string() + ": view entries must be strings");
    const fs::path rel = entry.get<std::string>();
    const fs::path full = rel.is_absolute() ? rel : base / rel;
    if (!fs::exists(full)) throw IoError("view file not found: " + full.string());
    views.push_back(read_view_file(full));
  }
  return MultiViewData(std::move(views));
}

void write_manifest(const std::vector<std::string>& view_paths, const fs::path& path) {
  nlohmann::json doc;
  doc["views"] = view_paths;
  detail::write_json_file(doc, path);
}

ModelParams read_params(const fs::path& path) {
  const nlohmann::json doc = detail::read_json_file(path);
  ModelParams out;
  try {
    const auto dir = doc.at("direction").get<std::string>();
    if (dir == "mixing") {
      out.direction = Direction::mixing;
    } else if (dir == "unmixing") {
      out.direction = Direction::unmixing;
    } else {
      throw FormatError(path.string() + ": direction must be \"mixing\" or \"unmixing\"");
    }
    for (const auto& mat : doc.at("matrices")) out.matrices.push_back(detail::matrix_from_json(mat));
    for (const auto& vec : doc.at("noise_vars")) out.noise_vars.push_back(detail::vector_from_json(vec));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
  out.validate();
  return out;
}

void write_params(const ModelParams& params, const fs::path& path) {
  nlohmann::json doc;
  doc["direction"] = params.direction == Direction::mixing ? "mixing" : "unmixing";
  doc["matrices"] = nlohmann::json::array();
  for (const auto& m : params.matrices) doc["matrices"].push_back(detail::matrix_to_json(m));
  doc["noise_vars"] = nlohmann::json::array();
  for (const auto& v : params.noise_vars) doc["noise_vars"].push_back(detail::vector_to_json(v));
  detail::write_json_file(doc, path);
}

Matrix read_csv_matrix(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<std::vector<double>> rows;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      try {
        std::size_t used = 0;
        row.push_back(std::stod(cell, &used));
      } catch (const std::exception&) {
        throw FormatError(path.string() + ":" + std::to_string(lineno) + ": not a number: '" + cell + "'");
      }
      if (!std::isfinite(row.back())) throw DataError(path.string() + ":" + std::to_string(lineno) + ": non-finite value");
    }
    if (!rows.empty() && row.size() != rows.front().size())
      throw ShapeError(path.string() + ":" + std::to_string(lineno) + ": ragged row");
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw FormatError(path.string() + ": empty CSV");
  Matrix m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.front().size()));
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (std::size_t c = 0; c < rows[r].size(); ++c) m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];
  return m;
}

}  // namespace shica
