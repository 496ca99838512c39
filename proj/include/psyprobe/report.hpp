#pragma once

#include <filesystem>
#include <nlohmann/json.hpp>
#include <span>
#include <string>
#include <vector>

#include "psyprobe/deepception.hpp"
#include "psyprobe/probing.hpp"

namespace psyprobe {

inline constexpr int kReportSchemaVersion = 1;

/// Shortest round-trip decimal; "inf"/"-inf"/"nan" for non-finite values.
std::string format_number(double v);
/// JSON number, or the format_number string for non-finite values.
nlohmann::json json_number(double v);

std::string spatial_map_csv(const ProbabilityMap& map);
std::string spatial_stats_csv(std::span<const ProbabilityMap> maps, std::span<const SpatialStats> stats);
/// Header oracle,avg_ratio,avg_max,avg_min.
std::string spatial_summary_csv(std::span<const SpatialSummary> rows);

std::string traces_csv(std::span<const PlacementTrace> traces);
std::string gains_csv(std::span<const PlacementTrace> traces);

std::string local_curve_csv(std::span<const LocalCurvePoint> curve);

nlohmann::json attack_config_json(const AttackConfig& cfg);
nlohmann::json campaign_json(const CampaignReport& report, const nlohmann::json& config_echo,
                             const std::string& config_hash);
std::string campaign_rows_csv(const CampaignReport& report);

std::string transparency_csv(std::span<const TransparencyRow> rows);
nlohmann::json transparency_json(std::span<const TransparencyRow> rows, const std::string& oracle_id,
                                 const nlohmann::json& config_echo, const std::string& config_hash);

std::string decoy_study_csv(const DecoyStudy& study);
nlohmann::json decoy_study_json(const DecoyStudy& study, const std::string& oracle_id,
                                const nlohmann::json& config_echo, const std::string& config_hash);

std::string patches_csv(std::span<const Patch> patches);

/// Patch manifest: metadata plus the PNG file name of every patch, relative
/// to the manifest's directory.
nlohmann::json patches_json(std::span<const Patch> patches, std::span<const std::string> files);
std::vector<Patch> load_patch_manifest(const std::filesystem::path& path);

}  // namespace psyprobe
