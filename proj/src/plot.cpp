#include "psyprobe/plot.hpp"

#include <algorithm>
#include <cmath>
#include <fmt/format.h>
#include <limits>
#include <set>

#include "psyprobe/error.hpp"
#include "psyprobe/image_io.hpp"

namespace psyprobe {
namespace {

constexpr double kWidth = 640;
constexpr double kHeight = 480;
constexpr double kLeft = 70;
constexpr double kRight = 20;
constexpr double kTop = 40;
constexpr double kBottom = 60;
constexpr const char* kPalette[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#9467bd", "#8c564b", "#17becf"};

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string num(double v) { return fmt::format("{:.2f}", v); }

std::string label_num(double v) {
  if (v != 0.0 && (std::abs(v) < 1e-2 || std::abs(v) >= 1e4)) return fmt::format("{:.2e}", v);
  return fmt::format("{:.3g}", v);
}

struct Range {
  double lo = 0.0;
  double hi = 1.0;
};

Range padded(double lo, double hi) {
  if (!std::isfinite(lo) || !std::isfinite(hi)) return {0.0, 1.0};
  if (lo == hi) return {lo - 0.5, hi + 0.5};
  const double pad = 0.05 * (hi - lo);
  return {lo - pad, hi + pad};
}

class Canvas {
 public:
  Canvas(const PlotData& data, Range x, Range y) : x_(x), y_(y) {
    svg_ = fmt::format(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{0}\" height=\"{1}\" viewBox=\"0 0 {0} {1}\">\n"
        "<rect width=\"{0}\" height=\"{1}\" fill=\"white\"/>\n",
        kWidth, kHeight);
    text(kWidth / 2, 24, data.title, 16, "middle");
    text(kWidth / 2, kHeight - 15, data.x_label, 12, "middle");
    svg_ += fmt::format(
        "<text x=\"18\" y=\"{}\" font-family=\"sans-serif\" font-size=\"12\" text-anchor=\"middle\" "
        "transform=\"rotate(-90 18 {})\">{}</text>\n",
        num(kHeight / 2), num(kHeight / 2), escape(data.y_label));
  }

  double px(double x) const { return kLeft + (x - x_.lo) / (x_.hi - x_.lo) * (kWidth - kLeft - kRight); }
  double py(double y) const {
    return kHeight - kBottom - (y - y_.lo) / (y_.hi - y_.lo) * (kHeight - kTop - kBottom);
  }

  void axes(bool x_ticks = true) {
    const double x0 = kLeft, x1 = kWidth - kRight, y0 = kHeight - kBottom, y1 = kTop;
    svg_ += fmt::format("<path d=\"M{} {} L{} {} L{} {}\" fill=\"none\" stroke=\"black\"/>\n", num(x0),
                        num(y1), num(x0), num(y0), num(x1), num(y0));
    for (int i = 0; i <= 4; ++i) {
      const double yv = y_.lo + (y_.hi - y_.lo) * i / 4.0;
      text(x0 - 6, py(yv) + 4, label_num(yv), 10, "end");
      if (x_ticks) {
        const double xv = x_.lo + (x_.hi - x_.lo) * i / 4.0;
        text(px(xv), y0 + 16, label_num(xv), 10, "middle");
      }
    }
  }

  void text(double x, double y, const std::string& s, int size, const char* anchor) {
    if (s.empty()) return;
    svg_ += fmt::format(
        "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"{}\" text-anchor=\"{}\">{}</text>\n",
        num(x), num(y), size, anchor, escape(s));
  }

  void raw(const std::string& s) { svg_ += s; }
  std::string finish() { return svg_ + "</svg>\n"; }

 private:
  Range x_;
  Range y_;
  std::string svg_;
};

void check_series(const PlotData& data) {
  bool any = false;
  for (const auto& s : data.series) {
    if (s.x.size() != s.y.size()) throw DimensionError("series x and y differ in length");
    any = any || !s.x.empty();
  }
  if (!any) throw EmptyError("plot has no data points");
}

Range finite_range(const PlotData& data, bool use_x) {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  for (const auto& s : data.series) {
    for (double v : use_x ? s.x : s.y) {
      if (!std::isfinite(v)) continue;
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  }
  return padded(lo, hi);
}

std::string cross(double x, double y, const char* color) {
  return fmt::format("<path d=\"M{} {} L{} {} M{} {} L{} {}\" stroke=\"{}\" stroke-width=\"2\"/>\n",
                     num(x - 5), num(y - 5), num(x + 5), num(y + 5), num(x - 5), num(y + 5), num(x + 5),
                     num(y - 5), color);
}

void legend(Canvas& c, const PlotData& data) {
  double y = kTop + 10;
  for (std::size_t i = 0; i < data.series.size(); ++i) {
    const auto& s = data.series[i];
    if (s.label.empty()) continue;
    const char* color = s.baseline ? "red" : kPalette[i % std::size(kPalette)];
    c.raw(fmt::format("<rect x=\"{}\" y=\"{}\" width=\"10\" height=\"10\" fill=\"{}\"/>\n",
                      num(kWidth - kRight - 150), num(y - 9), color));
    c.text(kWidth - kRight - 135, y, s.label, 11, "start");
    y += 16;
  }
}

std::string render_xy(const PlotData& data, bool lines) {
  check_series(data);
  Canvas c(data, finite_range(data, true), finite_range(data, false));
  c.axes();
  for (std::size_t i = 0; i < data.series.size(); ++i) {
    const auto& s = data.series[i];
    const char* color = s.baseline ? "red" : kPalette[i % std::size(kPalette)];
    if (lines && s.x.size() > 1) {
      std::string d;
      for (std::size_t k = 0; k < s.x.size(); ++k) {
        if (!std::isfinite(s.x[k]) || !std::isfinite(s.y[k])) continue;
        d += fmt::format("{}{} {} ", d.empty() ? "M" : "L", num(c.px(s.x[k])), num(c.py(s.y[k])));
      }
      c.raw(fmt::format("<path d=\"{}\" fill=\"none\" stroke=\"{}\" stroke-width=\"2\"/>\n", d, color));
    }
    for (std::size_t k = 0; k < s.x.size(); ++k) {
      if (!std::isfinite(s.x[k]) || !std::isfinite(s.y[k])) continue;
      if (s.baseline) {
        c.raw(cross(c.px(s.x[k]), c.py(s.y[k]), "red"));
      } else {
        c.raw(fmt::format("<circle cx=\"{}\" cy=\"{}\" r=\"4\" fill=\"{}\"/>\n", num(c.px(s.x[k])),
                          num(c.py(s.y[k])), color));
      }
    }
  }
  legend(c, data);
  return c.finish();
}

std::string render_bar(const PlotData& data) {
  if (data.series.empty() || data.series[0].y.empty()) throw EmptyError("bar plot has no values");
  const auto& values = data.series[0].y;
  double hi = 0.0;
  double lo = 0.0;
  for (double v : values) {
    if (!std::isfinite(v)) continue;
    hi = std::max(hi, v);
    lo = std::min(lo, v);
  }
  const Range y = padded(lo, hi);
  Canvas c(data, {0.0, static_cast<double>(values.size())}, {std::min(0.0, y.lo), y.hi});
  c.axes(false);
  const double slot = (kWidth - kLeft - kRight) / values.size();
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double v = std::isfinite(values[i]) ? values[i] : hi;
    const double top = c.py(std::max(v, 0.0));
    const double bottom = c.py(std::min(v, 0.0));
    c.raw(fmt::format("<rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"{}\"/>\n",
                      num(kLeft + slot * i + slot * 0.15), num(top), num(slot * 0.7), num(bottom - top),
                      kPalette[0]));
    if (i < data.bar_labels.size() && values.size() <= 24) {
      c.text(kLeft + slot * (i + 0.5), kHeight - kBottom + 14, data.bar_labels[i], 9, "middle");
    }
  }
  return c.finish();
}

std::string render_heatmap(const PlotData& data) {
  if (data.grid.empty() || data.grid_cols <= 0 || data.grid_rows <= 0) {
    throw EmptyError("heatmap has no cells");
  }
  if (data.grid.size() != static_cast<std::size_t>(data.grid_cols) * data.grid_rows) {
    throw DimensionError("heatmap grid size does not match its shape");
  }
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  for (double v : data.grid) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  // Log colouring when values span more than two decades.
  const bool log_scale = lo > 0.0 && hi / lo > 100.0;
  auto level = [&](double v) {
    if (hi == lo) return 1.0;
    return log_scale ? (std::log10(v) - std::log10(lo)) / (std::log10(hi) - std::log10(lo)) : (v - lo) / (hi - lo);
  };
  Canvas c(data, {0.0, 1.0}, {0.0, 1.0});
  const double side = std::min((kWidth - kLeft - kRight - 90) / data.grid_cols,
                               (kHeight - kTop - kBottom) / data.grid_rows);
  for (int r = 0; r < data.grid_rows; ++r) {
    for (int col = 0; col < data.grid_cols; ++col) {
      const double t = std::clamp(level(data.grid[static_cast<std::size_t>(r) * data.grid_cols + col]), 0.0, 1.0);
      // Dark blue -> yellow.
      const int red = static_cast<int>(std::lround(30 + t * 223));
      const int green = static_cast<int>(std::lround(30 + t * 201));
      const int blue = static_cast<int>(std::lround(120 - t * 90));
      c.raw(fmt::format("<rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"#{:02x}{:02x}{:02x}\"/>\n",
                        num(kLeft + col * side), num(kTop + r * side), num(side), num(side), red, green, blue));
    }
  }
  const double bar_x = kLeft + data.grid_cols * side + 20;
  c.text(bar_x, kTop + 10, "max " + label_num(hi), 11, "start");
  c.text(bar_x, kTop + 26, "min " + label_num(lo), 11, "start");
  if (log_scale) c.text(bar_x, kTop + 42, "log colour", 11, "start");
  return c.finish();
}

}  // namespace

std::string render_svg(const PlotData& data, PlotKind kind) {
  switch (kind) {
    case PlotKind::kHeatmap: return render_heatmap(data);
    case PlotKind::kCurve: return render_xy(data, true);
    case PlotKind::kScatter: return render_xy(data, false);
    case PlotKind::kBar: return render_bar(data);
  }
  throw ParameterError("unknown plot kind");
}

void render_plot(const PlotData& data, PlotKind kind, const std::filesystem::path& out) {
  write_file_atomic(out, render_svg(data, kind));
}

PlotData heatmap_data(const ProbabilityMap& map) {
  if (map.values.empty()) throw EmptyError("spatial map is empty");
  std::set<int> xs;
  std::set<int> ys;
  for (const auto& p : map.positions) {
    xs.insert(p.x);
    ys.insert(p.y);
  }
  PlotData d;
  d.title = fmt::format("Probability by position ({})", map.patch_id);
  d.x_label = "patch x";
  d.y_label = "patch y";
  d.grid_cols = static_cast<int>(xs.size());
  d.grid_rows = static_cast<int>(ys.size());
  d.grid = map.values;
  return d;
}

PlotData transparency_curve_data(std::span<const TransparencyRow> rows) {
  PlotData d;
  d.title = "Fooling ratio versus decoy transparency";
  d.x_label = "transparency coefficient tau";
  d.y_label = "fooling ratio";
  Series s{"fooling ratio", {}, {}, false};
  for (const auto& r : rows) {
    s.x.push_back(r.tau);
    s.y.push_back(r.fooling_ratio);
  }
  d.series.push_back(std::move(s));
  return d;
}

PlotData decoy_scatter_data(const DecoyStudy& study) {
  PlotData d;
  d.title = "Fooled images versus decoy standard deviation";
  d.x_label = "decoy std";
  d.y_label = "fooled images";
  Series decoys{"decoys", {}, {}, false};
  for (const auto& r : study.rows) {
    decoys.x.push_back(r.std);
    decoys.y.push_back(r.fooled_count);
  }
  Series noise{"gaussian noise", {}, {}, true};
  for (const auto& r : study.baseline_rows) {
    noise.x.push_back(r.std);
    noise.y.push_back(r.fooled_count);
  }
  d.series.push_back(std::move(decoys));
  if (!noise.x.empty()) d.series.push_back(std::move(noise));
  return d;
}

PlotData fooled_by_decoys_data(const CampaignReport& report) {
  PlotData d;
  d.title = "Fooled targets versus inserted decoys";
  d.x_label = "decoys inserted";
  d.y_label = "fooled targets";
  Series s{fmt::format("{}x{} grid", report.config.grid_cols, report.config.grid_rows), {}, {}, false};
  const auto& counts = report.aggregate.fooled_by_decoy_budget;
  for (std::size_t k = 0; k < counts.size(); ++k) {
    s.x.push_back(static_cast<double>(k + 1));
    s.y.push_back(counts[k]);
  }
  d.series.push_back(std::move(s));
  return d;
}

PlotData gains_bar_data(std::span<const PlacementTrace> traces) {
  PlotData d;
  d.title = "Gains of repeated placement";
  d.y_label = "gain";
  Series s;
  for (std::size_t i = 0; i < traces.size(); ++i) {
    s.y.push_back(traces[i].gain);
    s.x.push_back(static_cast<double>(i));
    d.bar_labels.push_back(fmt::format("{}{}", traces[i].mode == PlacementMode::kActivation ? "A" : "I", i));
  }
  d.series.push_back(std::move(s));
  return d;
}

PlotData local_curve_data(std::span<const LocalCurvePoint> curve) {
  PlotData d;
  d.title = "Mean patch probability by scale";
  d.x_label = "patch size (px)";
  d.y_label = "mean probability";
  Series resized{"resized to input", {}, {}, false};
  Series embedded{"embedded on black", {}, {}, false};
  for (const auto& p : curve) {
    resized.x.push_back(p.scale);
    resized.y.push_back(p.resized_mean);
    embedded.x.push_back(p.scale);
    embedded.y.push_back(p.embedded_mean);
  }
  d.series.push_back(std::move(resized));
  d.series.push_back(std::move(embedded));
  return d;
}

}  // namespace psyprobe
