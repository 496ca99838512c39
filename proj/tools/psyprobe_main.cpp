#include <CLI11.hpp>
#include <cstdlib>
#include <filesystem>
#include <fmt/format.h>
#include <iostream>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "psyprobe/campaign.hpp"
#include "psyprobe/error.hpp"
#include "psyprobe/image_io.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void setup_logging() {
  auto logger = spdlog::stderr_color_mt("psyprobe");
  spdlog::set_default_logger(logger);
  spdlog::set_pattern("[%l] %v");
  const char* level = std::getenv("PSYPROBE_LOG");
  spdlog::set_level(level ? spdlog::level::from_str(level) : spdlog::level::warn);
}

psyprobe::CampaignConfig load_config(const std::string& path, const psyprobe::ConfigOverrides& overrides) {
  json doc;
  fs::path base = fs::current_path();
  if (path.empty()) {
    doc = {{"schema_version", psyprobe::kConfigSchemaVersion}, {"oracle", {{"kind", "synthetic"}}}, {"io", json::object()}};
  } else {
    std::vector<std::uint8_t> bytes;
    try {
      bytes = psyprobe::read_file_bytes(path);
    } catch (const psyprobe::Error& e) {
      throw psyprobe::ConfigError({e.what()});
    }
    try {
      doc = json::parse(bytes.begin(), bytes.end());
    } catch (const json::parse_error& e) {
      throw psyprobe::ConfigError({fmt::format("{} is not valid JSON: {}", path, e.what())});
    }
    base = fs::absolute(path).parent_path();
  }
  auto violations = psyprobe::apply_overrides(doc, overrides);
  try {
    auto config = psyprobe::CampaignConfig::from_json(doc, base);
    if (!violations.empty()) throw psyprobe::ConfigError(violations);
    return config;
  } catch (const psyprobe::ConfigError& e) {
    violations.insert(violations.end(), e.violations().begin(), e.violations().end());
    throw psyprobe::ConfigError(violations);
  }
}

}  // namespace

int main(int argc, char** argv) {
  setup_logging();

  CLI::App app{"Black-box psychophysics probing and decoy attacks on image classifiers", "psyprobe"};
  app.require_subcommand(1);

  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<int> jobs;
  std::optional<std::string> out;
  std::optional<std::uint64_t> budget;
  std::optional<std::string> endpoint;
  app.add_option("--config", config_path, "experiment config file (JSON)");
  app.add_option("--seed", seed, "override the config seed");
  app.add_option("--jobs", jobs, "worker threads")->check(CLI::PositiveNumber);
  app.add_option("--out", out, "output directory");
  app.add_option("--budget", budget, "total oracle query budget")->check(CLI::PositiveNumber);
  app.add_option("--oracle-endpoint", endpoint, "classify with a remote oracle at this URL");

  const std::pair<const char*, const char*> commands[] = {
      {"extract-patches", "extract the best patch per class"},
      {"local-curve", "mean patch probability by scale"},
      {"spatial-map", "probability of a patch at every position"},
      {"cumulative", "greedy repeated placement traces and gains"},
      {"attack", "decoy attack campaign"},
      {"study-transparency", "fooling ratio versus decoy transparency"},
      {"study-decoys", "fooled images versus decoy std, with Gaussian baselines"},
      {"report", "re-render CSV and SVG from a report JSON"},
  };
  for (const auto& [name, help] : commands) app.add_subcommand(name, help)->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return static_cast<int>(psyprobe::ExitCode::kConfig);
  }

  psyprobe::ConfigOverrides overrides;
  overrides.kind = app.get_subcommands().front()->get_name();
  overrides.seed = seed;
  overrides.jobs = jobs;
  overrides.budget = budget;
  overrides.oracle_endpoint = endpoint;
  if (out) overrides.output_dir = fs::absolute(*out).string();

  psyprobe::CampaignConfig config;
  try {
    config = load_config(config_path, overrides);
  } catch (const psyprobe::ConfigError& e) {
    std::cerr << "config error:\n";
    for (const auto& v : e.violations()) std::cerr << "  - " << v << "\n";
    return static_cast<int>(psyprobe::ExitCode::kConfig);
  }

  const auto outcome = psyprobe::run(config);
  if (outcome.code != psyprobe::ExitCode::kSuccess) {
    std::cerr << outcome.message << "\n";
  }
  std::cout << fmt::format("{}: {} file{} in {} ({} queries)\n", config.experiment.kind, outcome.outputs.size(),
                           outcome.outputs.size() == 1 ? "" : "s", outcome.output_dir.string(), outcome.query_count);
  return static_cast<int>(outcome.code);
}
