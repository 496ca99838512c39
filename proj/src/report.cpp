#include "psyprobe/report.hpp"

#include <cmath>
#include <fmt/format.h>

#include "psyprobe/error.hpp"
#include "psyprobe/image_io.hpp"

namespace psyprobe {
namespace {

using nlohmann::json;

json rect_json(const Rect& r) { return {{"x", r.x}, {"y", r.y}, {"w", r.w}, {"h", r.h}}; }

json fool_count_json(const std::map<int, double>& m) {
  json out = json::array();
  for (const auto& [count, p] : m) out.push_back({{"fool_count", count}, {"mean_p_initial", json_number(p)}});
  return out;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string quoted = "\"";
  for (char c : s) {
    if (c == '"') quoted += '"';
    quoted += c;
  }
  return quoted + "\"";
}

}  // namespace

std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  return fmt::format("{}", v);
}

json json_number(double v) {
  if (std::isfinite(v)) return v;
  return format_number(v);
}

std::string spatial_map_csv(const ProbabilityMap& map) {
  std::string out = "x,y,probability\n";
  for (std::size_t i = 0; i < map.positions.size(); ++i) {
    out += fmt::format("{},{},{}\n", map.positions[i].x, map.positions[i].y, format_number(map.values[i]));
  }
  return out;
}

std::string spatial_stats_csv(std::span<const ProbabilityMap> maps, std::span<const SpatialStats> stats) {
  std::string out = "patch_id,positions,ratio,max,min,argmax_x,argmax_y,argmin_x,argmin_y\n";
  for (std::size_t i = 0; i < stats.size(); ++i) {
    const auto& s = stats[i];
    out += fmt::format("{},{},{},{},{},{},{},{},{}\n", csv_field(maps[i].patch_id), maps[i].positions.size(),
                       format_number(s.ratio), format_number(s.max), format_number(s.min), s.argmax.x,
                       s.argmax.y, s.argmin.x, s.argmin.y);
  }
  return out;
}

std::string spatial_summary_csv(std::span<const SpatialSummary> rows) {
  std::string out = "oracle,avg_ratio,avg_max,avg_min\n";
  for (const auto& r : rows) {
    out += fmt::format("{},{},{},{}\n", csv_field(r.oracle_id), format_number(r.avg_ratio),
                       format_number(r.avg_max), format_number(r.avg_min));
  }
  return out;
}

std::string traces_csv(std::span<const PlacementTrace> traces) {
  std::string out = "patch_id,mode,step,cell_index,probability\n";
  for (const auto& t : traces) {
    for (std::size_t k = 0; k < t.steps.size(); ++k) {
      out += fmt::format("{},{},{},{},{}\n", csv_field(t.patch_id), to_string(t.mode), k + 1,
                         t.steps[k].cell_index, format_number(t.steps[k].prob_after));
    }
  }
  return out;
}

std::string gains_csv(std::span<const PlacementTrace> traces) {
  std::string out = "patch_id,mode,steps,prob_init,prob_final,gain\n";
  for (const auto& t : traces) {
    out += fmt::format("{},{},{},{},{},{}\n", csv_field(t.patch_id), to_string(t.mode), t.steps.size(),
                       format_number(t.prob_init()), format_number(t.prob_final()), format_number(t.gain));
  }
  return out;
}

std::string local_curve_csv(std::span<const LocalCurvePoint> curve) {
  std::string out = "scale,resized_mean,embedded_mean\n";
  for (const auto& p : curve) {
    out += fmt::format("{},{},{}\n", p.scale, format_number(p.resized_mean), format_number(p.embedded_mean));
  }
  return out;
}

json attack_config_json(const AttackConfig& cfg) {
  json budget = cfg.query_budget == OracleBudget::kUnlimited ? json(nullptr) : json(cfg.query_budget);
  return {{"tau", cfg.tau},
          {"grid", {cfg.grid_cols, cfg.grid_rows}},
          {"max_decoys", cfg.max_decoys <= 0 ? cfg.grid_cols * cfg.grid_rows : cfg.max_decoys},
          {"query_budget", budget},
          {"target_class_source", "top1-of-original"}};
}

json campaign_json(const CampaignReport& report, const json& config_echo, const std::string& config_hash) {
  json rows = json::array();
  for (const auto& row : report.rows) {
    json r = {{"image_id", row.image_id}};
    if (!row.result) {
      r["error"] = row.error;
      r["fooled"] = false;
      rows.push_back(r);
      continue;
    }
    const AttackResult& a = *row.result;
    json placements = json::array();
    for (int c : a.placement_cells) placements.push_back(c);
    r["fooled"] = a.fooled;
    r["decoys_used"] = a.decoys_used;
    r["target_class"] = a.target_class;
    r["p_t_initial"] = json_number(a.p_target_initial);
    r["p_t_final"] = json_number(a.p_target_final);
    r["adversarial_class"] = a.adversarial_class ? json(*a.adversarial_class) : json(nullptr);
    r["queries"] = a.queries_consumed;
    r["placements"] = placements;
    r["stop_reason"] = std::string(to_string(a.stop_reason));
    rows.push_back(r);
  }
  const auto& agg = report.aggregate;
  return {{"schema_version", kReportSchemaVersion},
          {"kind", "attack-campaign"},
          {"oracle_id", report.oracle_id},
          {"config", config_echo},
          {"config_hash", config_hash},
          {"attack", attack_config_json(report.config)},
          {"decoy", {{"id", report.decoy_id}, {"std", json_number(report.decoy_std)}}},
          {"rows", rows},
          {"aggregate",
           {{"total", agg.total},
            {"fooled", agg.fooled},
            {"failures", agg.failures},
            {"budget_exhausted", agg.budget_exhausted},
            {"fooling_ratio", json_number(agg.fooling_ratio)},
            {"single_placement_fooled", agg.single_placement_fooled},
            {"fooled_by_decoy_budget", agg.fooled_by_decoy_budget},
            {"initial_probability_by_fool_count", fool_count_json(agg.initial_probability_by_fool_count)}}}};
}

std::string campaign_rows_csv(const CampaignReport& report) {
  std::string out = "image_id,fooled,decoys_used,p_t_initial,p_t_final,adversarial_class,queries,error\n";
  for (const auto& row : report.rows) {
    if (!row.result) {
      out += fmt::format("{},false,,,,,,{}\n", csv_field(row.image_id), csv_field(row.error));
      continue;
    }
    const AttackResult& a = *row.result;
    out += fmt::format("{},{},{},{},{},{},{},\n", csv_field(row.image_id), a.fooled ? "true" : "false",
                       a.decoys_used, format_number(a.p_target_initial), format_number(a.p_target_final),
                       csv_field(a.adversarial_class.value_or("")), a.queries_consumed);
  }
  return out;
}

std::string transparency_csv(std::span<const TransparencyRow> rows) {
  std::string out = "tau,decoy_id,fooled,total,fooling_ratio\n";
  for (const auto& r : rows) {
    out += fmt::format("{},{},{},{},{}\n", format_number(r.tau), csv_field(r.decoy_id), r.fooled, r.total,
                       format_number(r.fooling_ratio));
  }
  return out;
}

json transparency_json(std::span<const TransparencyRow> rows, const std::string& oracle_id,
                       const json& config_echo, const std::string& config_hash) {
  json out_rows = json::array();
  for (const auto& r : rows) {
    out_rows.push_back({{"tau", json_number(r.tau)},
                        {"decoy_id", r.decoy_id},
                        {"fooled", r.fooled},
                        {"total", r.total},
                        {"fooling_ratio", json_number(r.fooling_ratio)}});
  }
  return {{"schema_version", kReportSchemaVersion}, {"kind", "transparency-study"},
          {"oracle_id", oracle_id},                {"config", config_echo},
          {"config_hash", config_hash},            {"rows", out_rows}};
}

std::string decoy_study_csv(const DecoyStudy& study) {
  std::string out = "decoy_id,std,fooled_count,baseline\n";
  auto emit = [&](const DecoyStudyRow& r) {
    out += fmt::format("{},{},{},{}\n", csv_field(r.decoy_id), format_number(r.std), r.fooled_count,
                       r.baseline ? "true" : "false");
  };
  for (const auto& r : study.rows) emit(r);
  for (const auto& r : study.baseline_rows) emit(r);
  return out;
}

json decoy_study_json(const DecoyStudy& study, const std::string& oracle_id, const json& config_echo,
                      const std::string& config_hash) {
  auto rows_json = [](const std::vector<DecoyStudyRow>& rows) {
    json out = json::array();
    for (const auto& r : rows) {
      out.push_back({{"decoy_id", r.decoy_id}, {"std", json_number(r.std)}, {"fooled_count", r.fooled_count}});
    }
    return out;
  };
  return {{"schema_version", kReportSchemaVersion},
          {"kind", "decoy-study"},
          {"oracle_id", oracle_id},
          {"config", config_echo},
          {"config_hash", config_hash},
          {"rows", rows_json(study.rows)},
          {"baseline_rows", rows_json(study.baseline_rows)},
          {"fool_counts", study.fool_counts},
          {"initial_probability_by_fool_count", fool_count_json(study.initial_probability_by_fool_count)}};
}

std::string patches_csv(std::span<const Patch> patches) {
  std::string out = "patch_id,class_id,probability,image_id,x,y,w,h\n";
  for (const auto& p : patches) {
    const Rect& w = p.source.window;
    out += fmt::format("{},{},{},{},{},{},{},{}\n", csv_field(p.id()), csv_field(p.class_id),
                       format_number(p.probability), csv_field(p.source.image_id), w.x, w.y, w.w, w.h);
  }
  return out;
}

json patches_json(std::span<const Patch> patches, std::span<const std::string> files) {
  json list = json::array();
  for (std::size_t i = 0; i < patches.size(); ++i) {
    const Patch& p = patches[i];
    list.push_back({{"id", p.id()},
                    {"class_id", p.class_id},
                    {"probability", json_number(p.probability)},
                    {"image_id", p.source.image_id},
                    {"window", rect_json(p.source.window)},
                    {"window_size", p.source.window_size},
                    {"oracle_id", p.oracle_id},
                    {"file", files[i]}});
  }
  return {{"schema_version", kReportSchemaVersion}, {"patches", list}};
}

std::vector<Patch> load_patch_manifest(const std::filesystem::path& path) {
  const auto bytes = read_file_bytes(path);
  std::vector<Patch> patches;
  try {
    const json j = json::parse(bytes.begin(), bytes.end());
    for (const auto& e : j.at("patches")) {
      Patch p;
      p.class_id = e.at("class_id").get<std::string>();
      p.probability = e.at("probability").get<double>();
      p.source.image_id = e.at("image_id").get<std::string>();
      const auto& w = e.at("window");
      p.source.window = {w.at("x").get<int>(), w.at("y").get<int>(), w.at("w").get<int>(), w.at("h").get<int>()};
      p.source.window_size = e.at("window_size").get<int>();
      p.oracle_id = e.value("oracle_id", "");
      p.image = read_png(path.parent_path() / e.at("file").get<std::string>());
      if (p.image.width() != p.source.window.w || p.image.height() != p.source.window.h) {
        throw InputError(fmt::format("patch image for '{}' does not match its window", p.id()));
      }
      patches.push_back(std::move(p));
    }
  } catch (const json::exception& e) {
    throw InputError(fmt::format("malformed patch manifest {}: {}", path.string(), e.what()));
  }
  return patches;
}

}  // namespace psyprobe
