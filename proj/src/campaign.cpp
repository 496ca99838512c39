#include "psyprobe/campaign.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fmt/chrono.h>
#include <fmt/format.h>
#include <fmt/ranges.h>
#include <functional>
#include <set>
#include <spdlog/spdlog.h>

#include "psyprobe/deepception.hpp"
#include "psyprobe/encoding.hpp"
#include "psyprobe/error.hpp"
#include "psyprobe/image_io.hpp"
#include "psyprobe/onnx_oracle.hpp"
#include "psyprobe/plot.hpp"
#include "psyprobe/remote_oracle.hpp"
#include "psyprobe/report.hpp"
#include "psyprobe/rng.hpp"
#include "psyprobe/synthetic_oracle.hpp"

namespace psyprobe {
namespace {

using nlohmann::json;
namespace fs = std::filesystem;

using Check = std::function<std::optional<std::string>(const json&)>;

std::optional<std::string> positive_int(const json& v) {
  if (!v.is_number_integer() || v.get<std::int64_t>() < 1) return "must be a positive integer";
  return std::nullopt;
}

std::optional<std::string> non_negative_int(const json& v) {
  if (!v.is_number_integer() || v.get<std::int64_t>() < 0) return "must be a non-negative integer";
  return std::nullopt;
}

std::optional<std::string> positive_number(const json& v) {
  if (!v.is_number() || !(v.get<double>() > 0.0)) return "must be a positive number";
  return std::nullopt;
}

std::optional<std::string> tau_value(const json& v) {
  if (!v.is_number() || !(v.get<double>() > 0.0)) return "must be a positive number";
  return std::nullopt;
}

std::optional<std::string> string_value(const json& v) {
  if (!v.is_string() || v.get<std::string>().empty()) return "must be a non-empty string";
  return std::nullopt;
}

std::optional<std::string> bool_value(const json& v) {
  if (!v.is_boolean()) return "must be true or false";
  return std::nullopt;
}

std::optional<std::string> channels_value(const json& v) {
  if (!v.is_number_integer() || (v.get<std::int64_t>() != 1 && v.get<std::int64_t>() != 3)) {
    return "must be 1 or 3";
  }
  return std::nullopt;
}

std::optional<std::string> grid_value(const json& v) {
  if (!v.is_array() || v.size() != 2 || positive_int(v[0]) || positive_int(v[1])) {
    return "must be [cols, rows] with positive integers";
  }
  return std::nullopt;
}

Check list_of(Check item) {
  return [item](const json& v) -> std::optional<std::string> {
    if (!v.is_array() || v.empty()) return "must be a non-empty list";
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (auto err = item(v[i])) return fmt::format("item {} {}", i, *err);
    }
    return std::nullopt;
  };
}

Check one_of(std::vector<std::string> options) {
  return [options](const json& v) -> std::optional<std::string> {
    if (v.is_string() && std::find(options.begin(), options.end(), v.get<std::string>()) != options.end()) {
      return std::nullopt;
    }
    return fmt::format("must be one of {}", fmt::join(options, ", "));
  };
}

using Schema = std::vector<std::pair<std::string, Check>>;

void check_object(const json& obj, const std::string& where, const Schema& schema,
                  const std::vector<std::string>& required, std::vector<std::string>& violations) {
  if (!obj.is_object()) {
    violations.push_back(fmt::format("{} must be an object", where));
    return;
  }
  for (const auto& [key, value] : obj.items()) {
    auto it = std::find_if(schema.begin(), schema.end(), [&](const auto& e) { return e.first == key; });
    if (it == schema.end()) {
      violations.push_back(fmt::format("{}.{} is not a recognised key", where, key));
      continue;
    }
    if (auto err = it->second(value)) violations.push_back(fmt::format("{}.{} {}", where, key, *err));
  }
  for (const auto& key : required) {
    if (!obj.contains(key)) violations.push_back(fmt::format("{}.{} is required", where, key));
  }
}

Schema oracle_schema(const std::string& kind) {
  if (kind == "synthetic") {
    return {{"preset", one_of({"random", "uniform"})},
            {"width", positive_int},
            {"height", positive_int},
            {"channels", channels_value},
            {"classes", positive_int},
            {"seed", non_negative_int},
            {"mass", positive_number},
            {"weight", positive_number},
            {"temperature", positive_number}};
  }
  if (kind == "local") return {{"model", string_value}, {"manifest", string_value}};
  return {{"endpoint", string_value}, {"width", positive_int},      {"height", positive_int},
          {"channels", channels_value}, {"attempts", positive_int}, {"backoff_ms", non_negative_int},
          {"timeout_s", positive_int}};
}

Schema patch_source_schema() {
  return {{"class_ids", list_of(string_value)},
          {"window_sizes", list_of(positive_int)},
          {"presentation", one_of({"in-place", "resized"})},
          {"patches", string_value}};
}

Schema attack_schema() {
  Schema s = patch_source_schema();
  s.insert(s.end(), {{"images", positive_int},
                     {"tau", tau_value},
                     {"tau_mode", one_of({"divide", "multiply"})},
                     {"grid", grid_value},
                     {"max_decoys", non_negative_int},
                     {"query_budget", positive_int}});
  return s;
}

Schema experiment_schema(const std::string& kind) {
  Schema s;
  if (kind == "report") return {{"source", string_value}};
  if (kind == "attack" || kind == "study-transparency" || kind == "study-decoys") {
    s = attack_schema();
  } else {
    s = patch_source_schema();
  }
  if (kind == "local-curve") s.emplace_back("scales", list_of(positive_int));
  if (kind == "spatial-map") s.emplace_back("stride", positive_int);
  if (kind == "spatial-map" || kind == "cumulative") s.emplace_back("patch_size", positive_int);
  if (kind == "attack") s.emplace_back("dump_perturbed", bool_value);
  if (kind == "study-transparency") s.emplace_back("taus", list_of(tau_value));
  if (kind == "study-decoys") {
    s.emplace_back("gaussian_stds", list_of(positive_number));
    s.emplace_back("noise_seed", non_negative_int);
  }
  return s;
}

/// "divide" takes tau >= 1 as the decoy divisor; "multiply" takes a
/// coefficient in (0, 1] and divides by its reciprocal.
bool tau_multiplies(const json& params) {
  const auto it = params.find("tau_mode");
  return it != params.end() && it->is_string() && it->get<std::string>() == "multiply";
}

void check_tau_range(const json& params, std::vector<std::string>& v) {
  const bool multiply = tau_multiplies(params);
  auto check = [&](const std::string& key, const json& t) {
    if (!t.is_number() || !(t.get<double>() > 0.0)) return;
    const double tau = t.get<double>();
    if (multiply && tau > 1.0) v.push_back(fmt::format("experiment.params.{} must be in (0, 1] with tau_mode multiply", key));
    if (!multiply && tau < 1.0) v.push_back(fmt::format("experiment.params.{} must be >= 1 with tau_mode divide", key));
  };
  if (params.contains("tau")) check("tau", params["tau"]);
  if (params.contains("taus") && params["taus"].is_array()) {
    for (const auto& t : params["taus"]) check("taus", t);
  }
}

double tau_divisor(const json& params, double tau) {
  return tau_multiplies(params) ? 1.0 / tau : tau;
}

bool known_kind(const std::string& kind) {
  return std::find(std::begin(kExperimentKinds), std::end(kExperimentKinds), kind) != std::end(kExperimentKinds);
}

template <typename T>
T param(const json& params, const char* key, T fallback) {
  return params.contains(key) ? params.at(key).get<T>() : fallback;
}

// ---------------------------------------------------------------------------
// Output

std::string safe_name(std::string_view s) {
  std::string out;
  for (char c : s) {
    const bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '-' ||
                    c == '_' || c == '.';
    out += ok ? c : '_';
  }
  return out;
}

std::string utc_now() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  return fmt::format("{:%Y-%m-%dT%H:%M:%SZ}", fmt::gmtime(now));
}

/// Single writer for every artifact of a run.
class Writer {
 public:
  explicit Writer(fs::path root) : root_(std::move(root)) {}

  void text(const std::string& rel, std::string_view content) {
    const fs::path path = prepare(rel);
    write_file_atomic(path, content);
  }
  void bytes(const std::string& rel, std::span<const std::uint8_t> content) {
    const fs::path path = prepare(rel);
    write_file_atomic(path, content);
  }
  void json_file(const std::string& rel, const json& j) { text(rel, j.dump(2) + "\n"); }
  void svg(const std::string& rel, const PlotData& data, PlotKind kind) { text(rel, render_svg(data, kind)); }

  const fs::path& root() const { return root_; }
  std::vector<std::string> outputs() const { return {files_.begin(), files_.end()}; }

 private:
  fs::path prepare(const std::string& rel) {
    const fs::path path = root_ / rel;
    fs::create_directories(path.parent_path());
    files_.insert(rel);
    return path;
  }

  fs::path root_;
  std::set<std::string> files_;
};

struct Context {
  const CampaignConfig& config;
  Oracle& oracle;
  Writer& out;
  const json& params;
  json echo;
  std::string hash;
  bool budget_hit = false;
};

std::vector<SourceImage> load_sources(const Context& ctx, std::size_t n, std::uint64_t seed) {
  const InputDims dims = ctx.oracle.input_dims();
  if (ctx.config.io.input_dir.empty()) return generate_images(n, dims, seed);
  const fs::path dir = ctx.config.resolve(ctx.config.io.input_dir);
  std::vector<SourceImage> images;
  for (const auto& name : sample_images(dir, n, seed)) {
    Image img = read_png(dir / name, dims.channels);
    if (img.width() != dims.width || img.height() != dims.height) img = resize(img, dims.width, dims.height);
    images.push_back({name, std::move(img)});
  }
  return images;
}

std::vector<std::string> class_ids(const Context& ctx) {
  if (ctx.params.contains("class_ids")) return ctx.params.at("class_ids").get<std::vector<std::string>>();
  std::vector<std::string> ids;
  const ClassProbabilities probs = ctx.oracle.classify(black_input(ctx.oracle));
  for (const auto& [id, p] : probs.entries()) ids.push_back(id);
  return ids;
}

std::vector<int> window_sizes(const Context& ctx) {
  if (ctx.params.contains("window_sizes")) return ctx.params.at("window_sizes").get<std::vector<int>>();
  return default_window_sizes(ctx.oracle.input_dims().width);
}

std::vector<Patch> extract_patches(Context& ctx) {
  const auto classes = class_ids(ctx);
  const auto sizes = window_sizes(ctx);
  ExtractionOptions options;
  options.presentation = param<std::string>(ctx.params, "presentation", "in-place") == "resized"
                             ? WindowPresentation::kResized
                             : WindowPresentation::kInPlace;
  options.jobs = ctx.config.jobs;
  // Extraction sources are drawn with seed + 1 so they differ from attack targets.
  const auto sources = load_sources(ctx, 4 * classes.size(), ctx.config.seed + 1);
  std::vector<Patch> patches;
  for (std::size_t k = 0; k < classes.size(); ++k) {
    std::span<const SourceImage> four(sources.data() + 4 * k, 4);
    patches.push_back(extract_best_patch(four, classes[k], sizes, ctx.oracle, options));
    spdlog::info("patch for {}: {} (p = {})", classes[k], patches.back().id(), patches.back().probability);
  }
  return patches;
}

std::vector<Patch> obtain_patches(Context& ctx) {
  if (ctx.params.contains("patches")) {
    return load_patch_manifest(ctx.config.resolve(ctx.params.at("patches").get<std::string>()));
  }
  return extract_patches(ctx);
}

/// Patches rescaled to a quarter of the canvas (or patch_size), the cell size
/// of the 4x4 placement grid.
std::vector<Patch> grid_sized_patches(Context& ctx) {
  auto patches = obtain_patches(ctx);
  const InputDims dims = ctx.oracle.input_dims();
  const int w = ctx.params.contains("patch_size") ? ctx.params.at("patch_size").get<int>() : dims.width / 4;
  const int h = ctx.params.contains("patch_size") ? ctx.params.at("patch_size").get<int>() : dims.height / 4;
  for (Patch& p : patches) {
    if (p.image.width() != w || p.image.height() != h) p.image = resize(p.image, w, h);
  }
  return patches;
}

AttackConfig attack_config(const Context& ctx) {
  AttackConfig cfg;
  cfg.tau = ctx.params.contains("tau") ? tau_divisor(ctx.params, ctx.params.at("tau").get<double>()) : 4.0;
  if (ctx.params.contains("grid")) {
    cfg.grid_cols = ctx.params.at("grid")[0].get<int>();
    cfg.grid_rows = ctx.params.at("grid")[1].get<int>();
  }
  cfg.max_decoys = param<int>(ctx.params, "max_decoys", 0);
  cfg.query_budget = param<std::uint64_t>(ctx.params, "query_budget", OracleBudget::kUnlimited);
  cfg.jobs = ctx.config.jobs;
  return cfg;
}

std::vector<SourceImage> attack_targets(const Context& ctx) {
  return load_sources(ctx, param<std::size_t>(ctx.params, "images", 20), ctx.config.seed);
}

void note_budget(Context& ctx, const CampaignReport& report) {
  const bool global_spent = ctx.config.budget && ctx.oracle.budget().remaining() == 0;
  if (report.aggregate.budget_exhausted > 0 || (report.aggregate.failures > 0 && global_spent)) {
    ctx.budget_hit = true;
  }
}

void run_extract(Context& ctx) {
  const auto patches = extract_patches(ctx);
  std::vector<std::string> files;
  for (std::size_t i = 0; i < patches.size(); ++i) {
    files.push_back(fmt::format("patches/{:03}_{}.png", i, safe_name(patches[i].class_id)));
    ctx.out.bytes(files.back(), encode_png(patches[i].image));
  }
  ctx.out.json_file("patches.json", patches_json(patches, files));
  ctx.out.text("patches.csv", patches_csv(patches));
}

void run_local_curve(Context& ctx) {
  const auto patches = obtain_patches(ctx);
  std::vector<int> scales;
  if (ctx.params.contains("scales")) {
    scales = ctx.params.at("scales").get<std::vector<int>>();
  } else {
    const InputDims dims = ctx.oracle.input_dims();
    scales = window_sizes(ctx);
    scales.push_back(std::min(dims.width, dims.height));
  }
  const auto curve = local_property_curve(patches, scales, ctx.oracle, ctx.config.jobs);
  ctx.out.text("local_curve.csv", local_curve_csv(curve));
  ctx.out.svg("local_curve.svg", local_curve_data(curve), PlotKind::kCurve);
}

void run_spatial(Context& ctx) {
  const auto patches = grid_sized_patches(ctx);
  const int stride = param<int>(ctx.params, "stride", 10);
  std::vector<ProbabilityMap> maps;
  std::vector<SpatialStats> stats;
  for (std::size_t i = 0; i < patches.size(); ++i) {
    maps.push_back(spatial_map(patches[i], stride, ctx.oracle, ctx.config.jobs));
    stats.push_back(spatial_stats(maps.back()));
    const std::string stem = fmt::format("maps/{:03}_{}", i, safe_name(patches[i].class_id));
    ctx.out.text(stem + ".csv", spatial_map_csv(maps.back()));
    ctx.out.svg(stem + ".svg", heatmap_data(maps.back()), PlotKind::kHeatmap);
  }
  const SpatialSummary summary = summarize_spatial(ctx.oracle.id(), stats);
  ctx.out.text("stats.csv", spatial_stats_csv(maps, stats));
  ctx.out.text("summary.csv", spatial_summary_csv(std::span(&summary, 1)));
}

void run_cumulative(Context& ctx) {
  const auto patches = grid_sized_patches(ctx);
  std::vector<PlacementTrace> traces;
  for (const Patch& p : patches) {
    for (PlacementMode mode : {PlacementMode::kActivation, PlacementMode::kInhibition}) {
      traces.push_back(greedy_cumulative(p, mode, ctx.oracle, ctx.config.jobs));
    }
  }
  ctx.out.text("traces.csv", traces_csv(traces));
  ctx.out.text("gains.csv", gains_csv(traces));
  ctx.out.svg("gains.svg", gains_bar_data(traces), PlotKind::kBar);
}

void run_attack(Context& ctx) {
  const auto pool = obtain_patches(ctx);
  const AttackConfig cfg = attack_config(ctx);
  const auto targets = attack_targets(ctx);
  const Decoy decoy = select_decoy(pool, cfg.tau);
  const CampaignReport report = fooling_campaign(targets, decoy, cfg, ctx.oracle);
  note_budget(ctx, report);
  ctx.out.json_file("report.json", campaign_json(report, ctx.echo, ctx.hash));
  ctx.out.text("rows.csv", campaign_rows_csv(report));
  ctx.out.svg("fooled_vs_decoys.svg", fooled_by_decoys_data(report), PlotKind::kCurve);
  if (param<bool>(ctx.params, "dump_perturbed", false)) {
    for (const auto& row : report.rows) {
      if (!row.result) continue;
      ctx.out.bytes(fmt::format("perturbed/{}.png", safe_name(fs::path(row.image_id).stem().string())),
                    encode_png(row.result->perturbed_image));
    }
  }
}

void run_transparency(Context& ctx) {
  const auto pool = obtain_patches(ctx);
  const AttackConfig cfg = attack_config(ctx);
  const auto targets = attack_targets(ctx);
  auto taus = param<std::vector<double>>(ctx.params, "taus", {1.0, 2.0, 4.0, 8.0});
  if (ctx.params.contains("taus")) {
    for (double& t : taus) t = tau_divisor(ctx.params, t);
  }
  const auto rows = transparency_study(targets, pool, taus, cfg, ctx.oracle);
  ctx.out.text("transparency.csv", transparency_csv(rows));
  ctx.out.json_file("transparency.json", transparency_json(rows, ctx.oracle.id(), ctx.echo, ctx.hash));
  ctx.out.svg("transparency.svg", transparency_curve_data(rows), PlotKind::kCurve);
}

void run_decoy_study(Context& ctx) {
  const auto pool = obtain_patches(ctx);
  const AttackConfig cfg = attack_config(ctx);
  const auto targets = attack_targets(ctx);
  const auto stds = param<std::vector<double>>(ctx.params, "gaussian_stds", {100.0, 150.0});
  const auto noise_seed = param<std::uint64_t>(ctx.params, "noise_seed", ctx.config.seed);
  const DecoyStudy study = decoy_std_study(targets, pool, cfg, ctx.oracle, stds, noise_seed);
  ctx.out.text("decoys.csv", decoy_study_csv(study));
  ctx.out.json_file("decoys.json", decoy_study_json(study, ctx.oracle.id(), ctx.echo, ctx.hash));
  ctx.out.svg("decoys.svg", decoy_scatter_data(study), PlotKind::kScatter);
}

double number_field(const json& j, const char* key) {
  const json& v = j.at(key);
  if (v.is_string()) {
    const auto s = v.get<std::string>();
    if (s == "inf") return std::numeric_limits<double>::infinity();
    if (s == "-inf") return -std::numeric_limits<double>::infinity();
    return std::numeric_limits<double>::quiet_NaN();
  }
  return v.get<double>();
}

void rerender_campaign(Context& ctx, const json& j) {
  CampaignReport report;
  report.oracle_id = j.at("oracle_id").get<std::string>();
  const json& attack = j.at("attack");
  report.config.tau = attack.at("tau").get<double>();
  report.config.grid_cols = attack.at("grid")[0].get<int>();
  report.config.grid_rows = attack.at("grid")[1].get<int>();
  report.config.max_decoys = attack.at("max_decoys").get<int>();
  for (const auto& r : j.at("rows")) {
    CampaignRow row;
    row.image_id = r.at("image_id").get<std::string>();
    if (r.contains("error")) {
      row.error = r.at("error").get<std::string>();
    } else {
      AttackResult a;
      a.fooled = r.at("fooled").get<bool>();
      a.decoys_used = r.at("decoys_used").get<int>();
      a.target_class = r.at("target_class").get<std::string>();
      a.p_target_initial = number_field(r, "p_t_initial");
      a.p_target_final = number_field(r, "p_t_final");
      if (!r.at("adversarial_class").is_null()) a.adversarial_class = r.at("adversarial_class").get<std::string>();
      a.queries_consumed = r.at("queries").get<std::uint64_t>();
      row.result = std::move(a);
    }
    report.rows.push_back(std::move(row));
  }
  report.aggregate.fooled_by_decoy_budget =
      j.at("aggregate").at("fooled_by_decoy_budget").get<std::vector<int>>();
  ctx.out.text("rows.csv", campaign_rows_csv(report));
  ctx.out.svg("fooled_vs_decoys.svg", fooled_by_decoys_data(report), PlotKind::kCurve);
}

void rerender_transparency(Context& ctx, const json& j) {
  std::vector<TransparencyRow> rows;
  for (const auto& r : j.at("rows")) {
    rows.push_back({number_field(r, "tau"), r.at("decoy_id").get<std::string>(), r.at("fooled").get<int>(),
                    r.at("total").get<int>(), number_field(r, "fooling_ratio")});
  }
  ctx.out.text("transparency.csv", transparency_csv(rows));
  ctx.out.svg("transparency.svg", transparency_curve_data(rows), PlotKind::kCurve);
}

void rerender_decoys(Context& ctx, const json& j) {
  DecoyStudy study;
  auto read_rows = [](const json& rows, bool baseline) {
    std::vector<DecoyStudyRow> out;
    for (const auto& r : rows) {
      out.push_back({r.at("decoy_id").get<std::string>(), number_field(r, "std"), r.at("fooled_count").get<int>(),
                     baseline});
    }
    return out;
  };
  study.rows = read_rows(j.at("rows"), false);
  study.baseline_rows = read_rows(j.at("baseline_rows"), true);
  ctx.out.text("decoys.csv", decoy_study_csv(study));
  ctx.out.svg("decoys.svg", decoy_scatter_data(study), PlotKind::kScatter);
}

void run_report(Context& ctx) {
  const fs::path source = ctx.config.resolve(ctx.params.at("source").get<std::string>());
  const auto bytes = read_file_bytes(source);
  try {
    const json j = json::parse(bytes.begin(), bytes.end());
    const std::string kind = j.at("kind").get<std::string>();
    if (kind == "attack-campaign") {
      rerender_campaign(ctx, j);
    } else if (kind == "transparency-study") {
      rerender_transparency(ctx, j);
    } else if (kind == "decoy-study") {
      rerender_decoys(ctx, j);
    } else {
      throw InputError(fmt::format("{}: unknown report kind '{}'", source.string(), kind));
    }
  } catch (const json::exception& e) {
    throw InputError(fmt::format("malformed report {}: {}", source.string(), e.what()));
  }
}

void dispatch(Context& ctx) {
  const std::string& kind = ctx.config.experiment.kind;
  if (kind == "extract-patches") return run_extract(ctx);
  if (kind == "local-curve") return run_local_curve(ctx);
  if (kind == "spatial-map") return run_spatial(ctx);
  if (kind == "cumulative") return run_cumulative(ctx);
  if (kind == "attack") return run_attack(ctx);
  if (kind == "study-transparency") return run_transparency(ctx);
  if (kind == "study-decoys") return run_decoy_study(ctx);
  if (kind == "report") return run_report(ctx);
  throw ConfigError({fmt::format("experiment.kind '{}' is not supported", kind)});
}

json echo_json(const CampaignConfig& config) {
  json j = config.to_json();
  j["io"].erase("output_dir");
  return j;
}

}  // namespace

CampaignConfig CampaignConfig::from_json(const json& j, const fs::path& base_dir) {
  std::vector<std::string> v;
  CampaignConfig c;
  c.base_dir = base_dir;
  if (!j.is_object()) throw ConfigError({"config must be a JSON object"});

  static const std::set<std::string> top_keys = {"schema_version", "seed", "jobs", "budget",
                                                 "oracle", "experiment", "io"};
  for (const auto& [key, value] : j.items()) {
    if (!top_keys.contains(key)) v.push_back(fmt::format("{} is not a recognised key", key));
  }

  if (!j.contains("schema_version")) {
    v.push_back("schema_version is required");
  } else if (!j["schema_version"].is_number_integer() || j["schema_version"].get<int>() != kConfigSchemaVersion) {
    v.push_back(fmt::format("schema_version must be {}", kConfigSchemaVersion));
  }
  if (j.contains("seed")) {
    if (non_negative_int(j["seed"])) v.push_back("seed must be a non-negative integer");
    else c.seed = j["seed"].get<std::uint64_t>();
  }
  if (j.contains("jobs")) {
    if (positive_int(j["jobs"])) v.push_back("jobs must be a positive integer");
    else c.jobs = j["jobs"].get<int>();
  }
  if (j.contains("budget") && !j["budget"].is_null()) {
    if (positive_int(j["budget"])) v.push_back("budget must be a positive integer or null");
    else c.budget = j["budget"].get<std::uint64_t>();
  }

  if (!j.contains("oracle") || !j["oracle"].is_object()) {
    v.push_back("oracle must be an object with kind and params");
  } else {
    const json& o = j["oracle"];
    for (const auto& [key, value] : o.items()) {
      if (key != "kind" && key != "params") v.push_back(fmt::format("oracle.{} is not a recognised key", key));
    }
    c.oracle.kind = o.value("kind", "");
    if (c.oracle.kind != "synthetic" && c.oracle.kind != "local" && c.oracle.kind != "remote") {
      v.push_back("oracle.kind must be one of synthetic, local, remote");
    } else {
      c.oracle.params = o.value("params", json::object());
      std::vector<std::string> required;
      if (c.oracle.kind == "local") required = {"model", "manifest"};
      if (c.oracle.kind == "remote") required = {"endpoint", "width", "height", "channels"};
      check_object(c.oracle.params, "oracle.params", oracle_schema(c.oracle.kind), required, v);
    }
  }

  if (!j.contains("experiment") || !j["experiment"].is_object()) {
    v.push_back("experiment must be an object with kind and params");
  } else {
    const json& e = j["experiment"];
    for (const auto& [key, value] : e.items()) {
      if (key != "kind" && key != "params") v.push_back(fmt::format("experiment.{} is not a recognised key", key));
    }
    c.experiment.kind = e.contains("kind") && e["kind"].is_string() ? e["kind"].get<std::string>() : "";
    if (!known_kind(c.experiment.kind)) {
      v.push_back(fmt::format("experiment.kind must be one of {}", fmt::join(kExperimentKinds, ", ")));
    } else {
      c.experiment.params = e.value("params", json::object());
      std::vector<std::string> required;
      if (c.experiment.kind == "report") required = {"source"};
      check_object(c.experiment.params, "experiment.params", experiment_schema(c.experiment.kind), required, v);
      check_tau_range(c.experiment.params, v);
    }
  }

  if (!j.contains("io") || !j["io"].is_object()) {
    v.push_back("io must be an object with output_dir");
  } else {
    const json& io = j["io"];
    for (const auto& [key, value] : io.items()) {
      if (key != "input_dir" && key != "output_dir") v.push_back(fmt::format("io.{} is not a recognised key", key));
    }
    if (io.contains("input_dir")) {
      if (string_value(io["input_dir"])) v.push_back("io.input_dir must be a non-empty string");
      else c.io.input_dir = io["input_dir"].get<std::string>();
    }
    if (!io.contains("output_dir") || string_value(io["output_dir"])) {
      v.push_back("io.output_dir must be a non-empty string");
    } else {
      c.io.output_dir = io["output_dir"].get<std::string>();
    }
  }

  if (!v.empty()) throw ConfigError(std::move(v));
  return c;
}

CampaignConfig CampaignConfig::parse(std::string_view text, const fs::path& base_dir) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError({fmt::format("config is not valid JSON: {}", e.what())});
  }
  return from_json(j, base_dir);
}

CampaignConfig CampaignConfig::load(const fs::path& path) {
  std::vector<std::uint8_t> bytes;
  try {
    bytes = read_file_bytes(path);
  } catch (const Error& e) {
    throw ConfigError({e.what()});
  }
  const std::string text(bytes.begin(), bytes.end());
  return parse(text, fs::absolute(path).parent_path());
}

json CampaignConfig::to_json() const {
  json io = {{"output_dir", this->io.output_dir}};
  if (!this->io.input_dir.empty()) io["input_dir"] = this->io.input_dir;
  return {{"schema_version", schema_version},
          {"seed", seed},
          {"jobs", jobs},
          {"budget", budget ? json(*budget) : json(nullptr)},
          {"oracle", {{"kind", oracle.kind}, {"params", oracle.params}}},
          {"experiment", {{"kind", experiment.kind}, {"params", experiment.params}}},
          {"io", io}};
}

std::string CampaignConfig::canonical() const { return echo_json(*this).dump(); }

std::string CampaignConfig::hash() const { return sha256_hex(canonical()); }

fs::path CampaignConfig::resolve(const std::string& path) const {
  const fs::path p(path);
  return p.is_absolute() ? p : base_dir / p;
}

std::vector<std::string> apply_overrides(json& config, const ConfigOverrides& o) {
  std::vector<std::string> conflicts;
  if (!config.is_object()) return conflicts;
  if (!o.kind.empty()) {
    json& e = config["experiment"];
    if (e.is_null()) e = json::object();
    if (e.is_object()) {
      if (!e.contains("kind")) {
        e["kind"] = o.kind;
      } else if (e["kind"] != o.kind) {
        conflicts.push_back(
            fmt::format("experiment.kind {} does not match the {} subcommand", e["kind"].dump(), o.kind));
      }
    }
  }
  if (o.seed) config["seed"] = *o.seed;
  if (o.jobs) config["jobs"] = *o.jobs;
  if (o.budget) config["budget"] = *o.budget;
  if (o.output_dir) {
    if (!config["io"].is_object()) config["io"] = json::object();
    config["io"]["output_dir"] = *o.output_dir;
  }
  if (o.oracle_endpoint) {
    json& oracle = config["oracle"];
    if (!oracle.is_object()) oracle = json::object();
    if (oracle.value("kind", "") != "remote") {
      oracle = {{"kind", "remote"}, {"params", {{"width", 224}, {"height", 224}, {"channels", 3}}}};
    }
    if (!oracle["params"].is_object()) oracle["params"] = json::object();
    oracle["params"]["endpoint"] = *o.oracle_endpoint;
  }
  return conflicts;
}

std::vector<std::string> sample_images(const fs::path& dir, std::size_t n, std::uint64_t seed) {
  if (!fs::is_directory(dir)) throw InputError(fmt::format("{} is not a directory", dir.string()));
  std::vector<std::string> names;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    std::string ext = entry.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    if (ext == ".png") names.push_back(entry.path().filename().string());
  }
  if (names.size() < n) {
    throw InputError(fmt::format("{} holds {} images, {} requested", dir.string(), names.size(), n));
  }
  std::sort(names.begin(), names.end());
  Rng rng(seed);
  rng.shuffle(names);
  names.resize(n);
  return names;
}

std::vector<SourceImage> generate_images(std::size_t n, InputDims dims, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<SourceImage> images;
  for (std::size_t i = 0; i < n; ++i) {
    const int blocks = 4 + static_cast<int>(rng.uniform_int(5));
    std::vector<double> coarse(static_cast<std::size_t>(blocks) * blocks * dims.channels);
    for (double& v : coarse) v = rng.uniform();
    const Image small(blocks, blocks, dims.channels, std::move(coarse));
    images.push_back({fmt::format("generated-{:03}", i), resize(small, dims.width, dims.height)});
  }
  return images;
}

std::unique_ptr<Oracle> make_oracle(const CampaignConfig& config) {
  const json& p = config.oracle.params;
  const std::uint64_t budget = config.budget.value_or(OracleBudget::kUnlimited);
  if (config.oracle.kind == "synthetic") {
    const InputDims dims{param<int>(p, "width", 64), param<int>(p, "height", 64), param<int>(p, "channels", 3)};
    const int classes = param<int>(p, "classes", 4);
    const double temperature = param<double>(p, "temperature", 1.0);
    SyntheticOracleSpec spec =
        param<std::string>(p, "preset", "random") == "uniform"
            ? uniform_synthetic_spec(dims, classes, param<double>(p, "weight", 1.0), temperature)
            : random_synthetic_spec(dims, classes, param<std::uint64_t>(p, "seed", config.seed),
                                    param<double>(p, "mass", 40.0), temperature);
    return std::make_unique<SyntheticOracle>(std::move(spec), budget);
  }
  if (config.oracle.kind == "local") {
    return std::make_unique<OnnxOracle>(config.resolve(p.at("model").get<std::string>()),
                                        config.resolve(p.at("manifest").get<std::string>()), budget);
  }
  if (config.oracle.kind == "remote") {
    RemoteOptions options;
    options.attempts = param<int>(p, "attempts", options.attempts);
    options.backoff = std::chrono::milliseconds(param<int>(p, "backoff_ms", 100));
    options.timeout = std::chrono::seconds(param<int>(p, "timeout_s", 30));
    const InputDims dims{p.at("width").get<int>(), p.at("height").get<int>(), p.at("channels").get<int>()};
    return std::make_unique<RemoteOracle>(p.at("endpoint").get<std::string>(), dims, options, budget);
  }
  throw ConfigError({fmt::format("oracle.kind '{}' is not supported", config.oracle.kind)});
}

std::vector<int> default_window_sizes(int input_width) {
  if (input_width == 600) return {50, 100, 150, 200};
  std::vector<int> sizes;
  for (int base : {37, 56, 75, 112}) {
    sizes.push_back(std::max(1, static_cast<int>(std::lround(base * input_width / 224.0))));
  }
  return sizes;
}

RunOutcome run(const CampaignConfig& config) {
  RunOutcome outcome;
  outcome.output_dir = config.resolve(config.io.output_dir);
  Writer out(outcome.output_dir);
  const std::string started = utc_now();
  const json echo = echo_json(config);
  const std::string hash = config.hash();
  std::unique_ptr<Oracle> oracle;
  std::string status = "ok";

  try {
    out.json_file("config.json", echo);
    oracle = make_oracle(config);
    spdlog::info("running {} against {}", config.experiment.kind, oracle->id());
    Context ctx{config, *oracle, out, config.experiment.params, echo, hash};
    dispatch(ctx);
    if (ctx.budget_hit) {
      outcome.code = ExitCode::kBudget;
      status = "budget_exhausted";
      outcome.message = "query budget exhausted before every target was processed";
    }
  } catch (const ConfigError& e) {
    outcome.code = ExitCode::kConfig;
    status = "config_error";
    outcome.message = e.what();
  } catch (const BudgetError& e) {
    outcome.code = ExitCode::kBudget;
    status = "budget_exhausted";
    outcome.message = e.what();
  } catch (const std::exception& e) {
    outcome.code = ExitCode::kRuntime;
    status = "error";
    outcome.message = e.what();
  }

  outcome.query_count = oracle ? oracle->budget().consumed() : 0;
  outcome.outputs = out.outputs();
  const json manifest = {{"schema_version", kReportSchemaVersion},
                         {"config_hash", hash},
                         {"started_at", started},
                         {"finished_at", utc_now()},
                         {"oracle_id", oracle ? json(oracle->id()) : json(nullptr)},
                         {"query_count", outcome.query_count},
                         {"status", status},
                         {"message", outcome.message},
                         {"outputs", outcome.outputs}};
  try {
    fs::create_directories(outcome.output_dir);
    write_file_atomic(outcome.output_dir / "manifest.json", manifest.dump(2) + "\n");
  } catch (const std::exception& e) {
    if (outcome.code == ExitCode::kSuccess) {
      outcome.code = ExitCode::kRuntime;
      outcome.message = e.what();
    }
  }
  return outcome;
}

}  // namespace psyprobe
