#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "psyprobe/deepception.hpp"
#include "psyprobe/probing.hpp"

namespace psyprobe {

enum class PlotKind { kHeatmap, kCurve, kBar, kScatter };

struct Series {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
  /// Drawn as red crosses instead of dots (scatter) or markers (curve).
  bool baseline = false;
};

struct PlotData {
  std::string title;
  std::string x_label;
  std::string y_label;
  std::vector<Series> series;             // curve, scatter
  std::vector<std::string> bar_labels;    // bar: one value per label in series[0].y
  int grid_cols = 0;                      // heatmap
  int grid_rows = 0;
  std::vector<double> grid;               // heatmap values, row-major
};

/// Self-contained SVG; identical input gives identical bytes. Throws
/// EmptyError when there is nothing to draw.
std::string render_svg(const PlotData& data, PlotKind kind);
void render_plot(const PlotData& data, PlotKind kind, const std::filesystem::path& out);

/// Spatial map laid out on its placement lattice.
PlotData heatmap_data(const ProbabilityMap& map);
PlotData transparency_curve_data(std::span<const TransparencyRow> rows);
PlotData decoy_scatter_data(const DecoyStudy& study);
PlotData fooled_by_decoys_data(const CampaignReport& report);
PlotData gains_bar_data(std::span<const PlacementTrace> traces);
PlotData local_curve_data(std::span<const LocalCurvePoint> curve);

}  // namespace psyprobe
