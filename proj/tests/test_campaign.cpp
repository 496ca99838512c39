#include <doctest.h>

#include <fmt/format.h>
#include <fstream>
#include <nlohmann/json.hpp>

#include "psyprobe/campaign.hpp"
#include "psyprobe/error.hpp"
#include "psyprobe/image_io.hpp"
#include "support.hpp"

using namespace psyprobe;
using nlohmann::json;

namespace {

json small_config(const std::string& kind, json params = json::object()) {
  return {{"schema_version", 1},
          {"seed", 3},
          {"jobs", 2},
          {"oracle", {{"kind", "synthetic"}, {"params", {{"width", 32}, {"height", 32}, {"classes", 3}}}}},
          {"experiment", {{"kind", kind}, {"params", params}}},
          {"io", {{"output_dir", "out"}}}};
}

json read_json(const std::filesystem::path& p) {
  std::ifstream in(p);
  return json::parse(in);
}

std::vector<std::string> golden(const std::string& name) {
  std::ifstream in(std::filesystem::path(PSYPROBE_GOLDEN_DIR) / name);
  std::vector<std::string> lines;
  for (std::string line; std::getline(in, line);)
    if (!line.empty()) lines.push_back(line);
  return lines;
}

}  // namespace

TEST_CASE("config round-trips through json") {
  const auto c = CampaignConfig::from_json(small_config("attack", {{"images", 2}, {"tau", 2.0}}), "/base");
  CHECK(c.seed == 3);
  CHECK(c.jobs == 2);
  CHECK_FALSE(c.budget.has_value());
  CHECK(c.resolve("out") == std::filesystem::path("/base/out"));
  CHECK(c.resolve("/abs") == std::filesystem::path("/abs"));
  const auto again = CampaignConfig::from_json(c.to_json(), "/base");
  CHECK(again.canonical() == c.canonical());
  CHECK(again.hash() == c.hash());
  CHECK(c.hash().size() == 64);
}

TEST_CASE("config hash ignores the output directory and tracks everything else") {
  auto j = small_config("attack");
  const auto a = CampaignConfig::from_json(j, ".");
  j["io"]["output_dir"] = "elsewhere";
  CHECK(CampaignConfig::from_json(j, ".").hash() == a.hash());
  j["seed"] = 4;
  CHECK(CampaignConfig::from_json(j, ".").hash() != a.hash());
}

TEST_CASE("config validation lists every violation") {
  json j = small_config("attack", {{"tau", 0.5}, {"grid", {3, 3, 3}}, {"bogus", 1}});
  j["jobs"] = 0;
  j["schema_version"] = 9;
  j["oracle"]["params"]["channels"] = 2;
  try {
    CampaignConfig::from_json(j, ".");
    FAIL("expected a config error");
  } catch (const ConfigError& e) {
    CHECK(e.violations().size() >= 6);
  }
  CHECK_THROWS_AS(CampaignConfig::parse("{not json", "."), ConfigError);
  CHECK_THROWS_AS(CampaignConfig::from_json(small_config("dance"), "."), ConfigError);
  json remote = small_config("attack");
  remote["oracle"] = {{"kind", "remote"}, {"params", {{"endpoint", "http://x"}}}};
  CHECK_THROWS_AS(CampaignConfig::from_json(remote, "."), ConfigError);
}

TEST_CASE("overrides replace fields and report kind conflicts") {
  json j = small_config("attack");
  ConfigOverrides o;
  o.kind = "attack";
  o.seed = 11;
  o.budget = 500;
  o.output_dir = "/tmp/x";
  CHECK(apply_overrides(j, o).empty());
  const auto c = CampaignConfig::from_json(j, ".");
  CHECK(c.seed == 11);
  CHECK(c.budget == std::optional<std::uint64_t>(500));
  CHECK(c.io.output_dir == "/tmp/x");
  o.kind = "cumulative";
  CHECK(apply_overrides(j, o).size() == 1);
  json bare = {{"schema_version", 1}};
  ConfigOverrides endpoint;
  endpoint.kind = "attack";
  endpoint.oracle_endpoint = "http://127.0.0.1:9";
  CHECK(apply_overrides(bare, endpoint).empty());
  CHECK(bare["experiment"]["kind"] == "attack");
  CHECK(bare["oracle"]["kind"] == "remote");
}

TEST_CASE("sample_images matches the reference selection") {
  testing::TempDir dir("sample");
  for (int i = 0; i < 100; ++i) {
    std::ofstream(dir.path() / fmt::format("img_{:03d}.png", i));
  }
  std::ofstream(dir.path() / "notes.txt");
  CHECK(sample_images(dir.path(), 10, 0) == golden("sample_seed0.txt"));
  CHECK(sample_images(dir.path(), 10, 1) == golden("sample_seed1.txt"));
  CHECK(sample_images(dir.path(), 10, 1) == sample_images(dir.path(), 10, 1));
  CHECK(sample_images(dir.path(), 100, 5).size() == 100);
  CHECK_THROWS_AS(sample_images(dir.path(), 101, 0), InputError);
  CHECK_THROWS_AS(sample_images(dir.path() / "nope", 1, 0), InputError);
}

TEST_CASE("default window sizes") {
  CHECK(default_window_sizes(600) == std::vector<int>{50, 100, 150, 200});
  CHECK(default_window_sizes(224) == std::vector<int>{37, 56, 75, 112});
  CHECK(default_window_sizes(448) == std::vector<int>{74, 112, 150, 224});
}

TEST_CASE("generated images are deterministic and sized to the oracle") {
  const auto a = generate_images(3, {20, 12, 3}, 9);
  const auto b = generate_images(3, {20, 12, 3}, 9);
  REQUIRE(a.size() == 3);
  CHECK(a[2].image == b[2].image);
  CHECK(a[0].image.width() == 20);
  CHECK(a[0].image.height() == 12);
  CHECK_FALSE(a[0].image == generate_images(1, {20, 12, 3}, 10)[0].image);
}

TEST_CASE("attack run writes its artifacts and a consistent manifest") {
  testing::TempDir dir("run");
  auto c = CampaignConfig::from_json(small_config("attack", {{"images", 3}, {"dump_perturbed", true}}), dir.path());
  const RunOutcome r = run(c);
  CHECK(r.code == ExitCode::kSuccess);
  for (const char* f : {"config.json", "report.json", "rows.csv", "fooled_vs_decoys.svg"}) {
    CHECK(std::filesystem::exists(dir.path() / "out" / f));
  }
  const json manifest = read_json(dir.path() / "out" / "manifest.json");
  CHECK(manifest["config_hash"] == c.hash());
  CHECK(manifest["status"] == "ok");
  CHECK(manifest["query_count"] == r.query_count);
  CHECK(r.query_count > 0);
  // The echoed config reproduces the hash.
  json echoed = read_json(dir.path() / "out" / "config.json");
  CHECK_FALSE(echoed["io"].contains("output_dir"));
  echoed["io"]["output_dir"] = "anywhere";
  const auto echo = CampaignConfig::from_json(echoed, dir.path());
  CHECK(echo.hash() == c.hash());
  const json report = read_json(dir.path() / "out" / "report.json");
  std::uint64_t per_image = 0;
  for (const auto& row : report["rows"]) per_image += row["queries"].get<std::uint64_t>();
  CHECK(per_image <= r.query_count);
}

TEST_CASE("every experiment kind runs on a small oracle") {
  testing::TempDir dir("kinds");
  const std::vector<std::pair<std::string, json>> kinds = {
      {"extract-patches", json::object()},
      {"local-curve", {{"class_ids", {"class_00"}}}},
      {"spatial-map", {{"class_ids", {"class_01"}}, {"stride", 8}}},
      {"cumulative", {{"class_ids", {"class_00", "class_01"}}}},
      {"study-transparency", {{"images", 2}, {"taus", {1, 4}}}},
      {"study-decoys", {{"images", 2}, {"gaussian_stds", {100}}}},
  };
  for (const auto& [kind, params] : kinds) {
    CAPTURE(kind);
    json j = small_config(kind, params);
    j["io"]["output_dir"] = kind;
    const RunOutcome r = run(CampaignConfig::from_json(j, dir.path()));
    CHECK(r.code == ExitCode::kSuccess);
    CHECK(r.message == "");
    CHECK(r.outputs.size() >= 2);
    for (const auto& f : r.outputs) CHECK(std::filesystem::exists(r.output_dir / f));
  }
  json j = small_config("report", {{"source", "study-decoys/decoys.json"}});
  j["io"]["output_dir"] = "rerender";
  const RunOutcome r = run(CampaignConfig::from_json(j, dir.path()));
  CHECK(r.code == ExitCode::kSuccess);
  CHECK(r.query_count == 0);
  CHECK(read_file_bytes(dir.path() / "rerender" / "decoys.svg") ==
        read_file_bytes(dir.path() / "study-decoys" / "decoys.svg"));
}

TEST_CASE("multiplicative tau is the reciprocal divisor") {
  testing::TempDir dir("taumode");
  json a = small_config("attack", {{"images", 2}, {"tau", 4.0}});
  json b = small_config("attack", {{"images", 2}, {"tau", 0.25}, {"tau_mode", "multiply"}});
  a["io"]["output_dir"] = "divide";
  b["io"]["output_dir"] = "multiply";
  CHECK(run(CampaignConfig::from_json(a, dir.path())).code == ExitCode::kSuccess);
  CHECK(run(CampaignConfig::from_json(b, dir.path())).code == ExitCode::kSuccess);
  CHECK(read_file_bytes(dir.path() / "divide" / "rows.csv") == read_file_bytes(dir.path() / "multiply" / "rows.csv"));

  auto violations = [](json params) {
    try {
      CampaignConfig::from_json(small_config("study-transparency", params), ".");
    } catch (const ConfigError& e) {
      return e.violations().size();
    }
    return std::size_t{0};
  };
  CHECK(violations({{"tau", 0.5}}) == 1);
  CHECK(violations({{"tau", 2.0}, {"tau_mode", "multiply"}}) == 1);
  CHECK(violations({{"taus", {0.5, 1.0, 4.0}}, {"tau_mode", "multiply"}}) == 1);
  CHECK(violations({{"taus", {0.5, 1.0}}, {"tau_mode", "multiply"}}) == 0);
  CHECK(violations({{"tau_mode", "add"}}) == 1);
}

TEST_CASE("budget exhaustion maps to exit code 3") {
  testing::TempDir dir("budget");
  json j = small_config("attack", {{"images", 3}});
  j["budget"] = 40;
  const RunOutcome r = run(CampaignConfig::from_json(j, dir.path()));
  CHECK(r.code == ExitCode::kBudget);
  CHECK(r.query_count <= 40);
  const json manifest = read_json(dir.path() / "out" / "manifest.json");
  CHECK(manifest["status"] == "budget_exhausted");
  CHECK(manifest["query_count"] == r.query_count);
}

TEST_CASE("runtime failures map to exit code 1") {
  testing::TempDir dir("fail");
  json j = small_config("report", {{"source", "missing.json"}});
  const RunOutcome r = run(CampaignConfig::from_json(j, dir.path()));
  CHECK(r.code == ExitCode::kRuntime);
  CHECK(read_json(dir.path() / "out" / "manifest.json")["status"] == "error");
}
