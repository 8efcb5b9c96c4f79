#pragma once

#include "shica/experiments.hpp"

#include <filesystem>
#include <string_view>
#include <vector>

namespace shica::cli {

// First line of every CSV; bump the version when columns change.
inline constexpr std::string_view kPerturbationSchema = "# shica bench-perturbation v1";
inline constexpr std::string_view kPerturbationSummarySchema = "# shica bench-perturbation-summary v1";
inline constexpr std::string_view kSeparationSchema = "# shica bench-separation v1";

void write_perturbation_csv(const std::vector<PerturbationRecord>& recs, const std::filesystem::path& path);
void write_perturbation_summary_csv(const std::vector<PerturbationCell>& cells, const std::filesystem::path& path);
void write_separation_csv(const std::vector<SeparationRecord>& recs, const std::filesystem::path& path);

}  // namespace shica::cli
