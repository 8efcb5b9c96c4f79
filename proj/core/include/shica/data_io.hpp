#pragma once

// Binary view files (.shv), JSON manifests and JSON parameter files.
//
// .shv layout, all little-endian:
//   bytes  0..3   magic "SHV1"
//   bytes  4..7   reserved, zero
//   bytes  8..11  u32 rows
//   bytes 12..15  u32 cols
//   then rows*cols IEEE-754 binary64 values, row-major.

#include "shica/types.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace shica {

inline constexpr std::size_t kViewHeaderBytes = 16;

Matrix read_view_file(const std::filesystem::path& path);
void write_view_file(const Matrix& m, const std::filesystem::path& path);

/// Reads `{"views": [...]}`; paths are resolved relative to the manifest.
MultiViewData load_manifest(const std::filesystem::path& path);
/// Writes a manifest listing `view_paths` verbatim (they should be relative).
void write_manifest(const std::vector<std::string>& view_paths, const std::filesystem::path& path);

ModelParams read_params(const std::filesystem::path& path);
void write_params(const ModelParams& params, const std::filesystem::path& path);

/// Parses a CSV of numbers (one matrix row per line) into a finite Matrix.
Matrix read_csv_matrix(const std::filesystem::path& path);

}  // namespace shica
