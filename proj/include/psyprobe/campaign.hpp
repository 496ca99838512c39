#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <nlohmann/json.hpp>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "psyprobe/oracle.hpp"
#include "psyprobe/probing.hpp"

namespace psyprobe {

inline constexpr int kConfigSchemaVersion = 1;

inline constexpr std::string_view kExperimentKinds[] = {
    "extract-patches", "local-curve", "spatial-map",  "cumulative",
    "attack",          "study-transparency", "study-decoys", "report"};

struct OracleConfig {
  std::string kind = "synthetic";  // synthetic | local | remote
  nlohmann::json params = nlohmann::json::object();
};

struct ExperimentConfig {
  std::string kind;
  nlohmann::json params = nlohmann::json::object();
};

struct IoConfig {
  std::string input_dir;   // empty: generated source images
  std::string output_dir;
};

/// One experiment run. JSON file layout:
///
///   {"schema_version": 1, "seed": 0, "jobs": 1, "budget": null,
///    "oracle": {"kind": "synthetic", "params": {...}},
///    "experiment": {"kind": "attack", "params": {...}},
///    "io": {"input_dir": "...", "output_dir": "..."}}
///
/// Relative paths are resolved against base_dir, the directory of the config
/// file.
struct CampaignConfig {
  int schema_version = kConfigSchemaVersion;
  std::uint64_t seed = 0;
  int jobs = 1;
  std::optional<std::uint64_t> budget;
  OracleConfig oracle;
  ExperimentConfig experiment;
  IoConfig io;
  std::filesystem::path base_dir = ".";

  /// Validates everything and throws ConfigError listing every violation.
  static CampaignConfig from_json(const nlohmann::json& j, const std::filesystem::path& base_dir);
  static CampaignConfig parse(std::string_view text, const std::filesystem::path& base_dir);
  static CampaignConfig load(const std::filesystem::path& path);

  nlohmann::json to_json() const;
  /// Compact sorted-key JSON of the config without io.output_dir.
  std::string canonical() const;
  /// SHA-256 of canonical().
  std::string hash() const;
  std::filesystem::path resolve(const std::string& path) const;
};

/// Command-line values that replace config fields.
struct ConfigOverrides {
  std::string kind;
  std::optional<std::uint64_t> seed;
  std::optional<int> jobs;
  std::optional<std::string> output_dir;
  std::optional<std::uint64_t> budget;
  std::optional<std::string> oracle_endpoint;
};

/// Applies overrides to a raw config document before validation. A missing
/// experiment kind takes the subcommand; a different one is returned as a
/// violation.
std::vector<std::string> apply_overrides(nlohmann::json& config, const ConfigOverrides& overrides);

/// Seeded subset of the PNG files in dir: sorted names, Fisher-Yates shuffle,
/// first n. Throws InputError when there are fewer than n images.
std::vector<std::string> sample_images(const std::filesystem::path& dir, std::size_t n, std::uint64_t seed);

/// Deterministic blocky colour images used when no input directory is set.
std::vector<SourceImage> generate_images(std::size_t n, InputDims dims, std::uint64_t seed);

std::unique_ptr<Oracle> make_oracle(const CampaignConfig& config);

/// Window sizes for an oracle input width: 50/100/150/200 at 600 px, the
/// 37/56/75/112 family scaled to the width otherwise.
std::vector<int> default_window_sizes(int input_width);

enum class ExitCode : int {
  kSuccess = 0,
  kRuntime = 1,
  kConfig = 2,
  kBudget = 3,
};

struct RunOutcome {
  ExitCode code = ExitCode::kSuccess;
  std::string message;
  std::filesystem::path output_dir;
  std::vector<std::string> outputs;  // relative to output_dir
  std::uint64_t query_count = 0;
};

/// Runs the configured experiment and writes its artifacts, config.json and
/// manifest.json. Errors are mapped to exit codes, never thrown.
RunOutcome run(const CampaignConfig& config);

}  // namespace psyprobe
