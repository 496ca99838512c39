#include "psyprobe/probing.hpp"

#include <algorithm>
#include <fmt/format.h>
#include <limits>
#include <set>

#include "psyprobe/error.hpp"
#include "psyprobe/parallel.hpp"

namespace psyprobe {
namespace {

Image on_black(const Image& patch, const Rect& pos, const InputDims& dims) {
  return insert_patch(make_black_canvas(dims.width, dims.height, dims.channels), patch, pos);
}

}  // namespace

std::string Patch::id() const {
  const Rect& r = source.window;
  return fmt::format("{}@{},{},{}x{}", source.image_id, r.x, r.y, r.w, r.h);
}

std::vector<Rect> enumerate_windows(int img_w, int img_h, std::span<const int> window_sizes) {
  std::vector<int> sizes(window_sizes.begin(), window_sizes.end());
  std::sort(sizes.begin(), sizes.end(), std::greater<>());
  sizes.erase(std::unique(sizes.begin(), sizes.end()), sizes.end());
  std::vector<Rect> windows;
  for (int s : sizes) {
    if (s <= 0) throw ParameterError(fmt::format("window size must be positive, got {}", s));
    if (s > img_w || s > img_h) {
      throw TilingError(fmt::format("{}px window does not fit a {}x{} image", s, img_w, img_h));
    }
    for (int y = 0; y + s <= img_h; y += s) {
      for (int x = 0; x + s <= img_w; x += s) windows.push_back({x, y, s, s});
    }
  }
  return windows;
}

Patch extract_best_patch(std::span<const SourceImage> images, const std::string& class_id,
                         std::span<const int> window_sizes, Oracle& oracle,
                         const ExtractionOptions& options) {
  if (images.size() != 4) {
    throw InputError(fmt::format("patch extraction needs exactly 4 source images, got {}", images.size()));
  }
  if (window_sizes.empty()) throw ParameterError("no window sizes given");
  const InputDims dims = oracle.input_dims();
  std::vector<Image> sources;
  for (const auto& src : images) {
    const Image& img = src.image;
    sources.push_back(img.width() == dims.width && img.height() == dims.height
                          ? img
                          : resize(img, dims.width, dims.height));
  }
  const auto windows = enumerate_windows(dims.width, dims.height, window_sizes);

  // Candidate order is the tie-break order: size desc, image, row-major.
  struct Candidate {
    std::size_t image;
    Rect window;
  };
  std::vector<Candidate> candidates;
  for (std::size_t s = 0; s < windows.size();) {
    std::size_t end = s;
    while (end < windows.size() && windows[end].w == windows[s].w) ++end;
    for (std::size_t i = 0; i < sources.size(); ++i) {
      for (std::size_t k = s; k < end; ++k) candidates.push_back({i, windows[k]});
    }
    s = end;
  }

  const auto probs = parallel_map(candidates.size(), options.jobs, [&](std::size_t k) {
    const Candidate& cand = candidates[k];
    const Image window = crop(sources[cand.image], cand.window);
    const Image shown =
        options.presentation == WindowPresentation::kInPlace
            ? on_black(window, cand.window, dims)
            : to_channels(resize(window, dims.width, dims.height), dims.channels);
    return oracle.probability_of(shown, class_id);
  });

  std::size_t best = 0;
  for (std::size_t k = 1; k < probs.size(); ++k) {
    if (probs[k] > probs[best]) best = k;
  }
  const Candidate& winner = candidates[best];
  Patch patch;
  patch.image = crop(sources[winner.image], winner.window);
  patch.class_id = class_id;
  patch.probability = probs[best];
  patch.source = {images[winner.image].id, winner.window, winner.window.w};
  patch.oracle_id = oracle.id();
  return patch;
}

double embedded_probability(const Image& image, const std::string& class_id, int x, int y,
                            Oracle& oracle) {
  const InputDims dims = oracle.input_dims();
  return oracle.probability_of(on_black(image, {x, y, image.width(), image.height()}, dims), class_id);
}

std::vector<LocalCurvePoint> local_property_curve(std::span<const Patch> patches,
                                                  std::span<const int> scales, Oracle& oracle,
                                                  int jobs) {
  if (patches.empty()) throw EmptyError("local property curve needs at least one patch");
  const InputDims dims = oracle.input_dims();
  std::vector<int> sorted(scales.begin(), scales.end());
  std::sort(sorted.begin(), sorted.end());
  sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());
  for (int s : sorted) {
    if (s <= 0 || s > dims.width || s > dims.height) {
      throw DimensionError(fmt::format("scale {} does not fit the {}x{} oracle input", s,
                                       dims.width, dims.height));
    }
  }

  std::vector<LocalCurvePoint> curve;
  for (int s : sorted) {
    const auto values = parallel_map(patches.size(), jobs, [&](std::size_t i) {
      const Patch& p = patches[i];
      const Image scaled = (p.image.width() == s && p.image.height() == s) ? p.image : resize(p.image, s, s);
      const Image stretched =
          to_channels(resize(scaled, dims.width, dims.height), dims.channels);
      const double a = oracle.probability_of(stretched, p.class_id);
      const double b =
          embedded_probability(scaled, p.class_id, (dims.width - s) / 2, (dims.height - s) / 2, oracle);
      return std::pair{a, b};
    });
    LocalCurvePoint point{s, 0.0, 0.0};
    for (const auto& [a, b] : values) {
      point.resized_mean += a;
      point.embedded_mean += b;
    }
    point.resized_mean /= static_cast<double>(values.size());
    point.embedded_mean /= static_cast<double>(values.size());
    curve.push_back(point);
  }
  return curve;
}

std::vector<Rect> placement_positions(int canvas_w, int canvas_h, int patch_w, int patch_h, int stride) {
  if (stride < 1) throw ParameterError(fmt::format("stride must be >= 1, got {}", stride));
  if (patch_w > canvas_w || patch_h > canvas_h) {
    throw DimensionError(fmt::format("{}x{} patch is larger than the {}x{} canvas", patch_w, patch_h,
                                     canvas_w, canvas_h));
  }
  std::vector<Rect> out;
  for (int y = 0; y + patch_h <= canvas_h; y += stride) {
    for (int x = 0; x + patch_w <= canvas_w; x += stride) out.push_back({x, y, patch_w, patch_h});
  }
  return out;
}

ProbabilityMap spatial_map(const Patch& patch, int stride, Oracle& oracle, int jobs) {
  const InputDims dims = oracle.input_dims();
  ProbabilityMap map;
  map.positions =
      placement_positions(dims.width, dims.height, patch.image.width(), patch.image.height(), stride);
  map.stride = stride;
  map.patch_id = patch.id();
  map.values = parallel_map(map.positions.size(), jobs, [&](std::size_t i) {
    return oracle.probability_of(on_black(patch.image, map.positions[i], dims), patch.class_id);
  });
  return map;
}

SpatialStats spatial_stats(const ProbabilityMap& map) {
  if (map.values.empty()) throw EmptyError("spatial statistics of an empty map");
  if (map.values.size() != map.positions.size()) {
    throw DimensionError("map values and positions differ in length");
  }
  SpatialStats stats;
  for (std::size_t i = 1; i < map.values.size(); ++i) {
    if (map.values[i] > map.values[stats.argmax_index]) stats.argmax_index = i;
    if (map.values[i] < map.values[stats.argmin_index]) stats.argmin_index = i;
  }
  stats.max = map.values[stats.argmax_index];
  stats.min = map.values[stats.argmin_index];
  stats.argmax = map.positions[stats.argmax_index];
  stats.argmin = map.positions[stats.argmin_index];
  if (stats.max == stats.min) {
    stats.ratio = 1.0;
  } else if (stats.min == 0.0) {
    stats.ratio = std::numeric_limits<double>::infinity();
  } else {
    stats.ratio = stats.max / stats.min;
  }
  return stats;
}

SpatialSummary summarize_spatial(const std::string& oracle_id, std::span<const SpatialStats> stats) {
  if (stats.empty()) throw EmptyError("no spatial statistics to summarize");
  SpatialSummary s{oracle_id, 0.0, 0.0, 0.0};
  for (const auto& st : stats) {
    s.avg_ratio += st.ratio;
    s.avg_max += st.max;
    s.avg_min += st.min;
  }
  const auto n = static_cast<double>(stats.size());
  s.avg_ratio /= n;
  s.avg_max /= n;
  s.avg_min /= n;
  return s;
}

std::string_view to_string(PlacementMode mode) {
  return mode == PlacementMode::kActivation ? "activation" : "inhibition";
}

double placement_gain(double prob_init, double prob_final) {
  if (prob_init == 0.0) {
    return prob_final == 0.0 ? 1.0 : std::numeric_limits<double>::infinity();
  }
  return prob_final / prob_init;
}

Image compose_placements(const Image& canvas, const Image& patch, std::span<const Rect> cells) {
  Image out = canvas;
  for (const Rect& cell : cells) out = insert_patch(out, patch, cell);
  return out;
}

PlacementTrace greedy_cumulative(const Patch& patch, PlacementMode mode, Oracle& oracle, int jobs) {
  const InputDims dims = oracle.input_dims();
  const auto cells = grid_cells(dims.width, dims.height, patch.image.width(), patch.image.height());
  const Image black = make_black_canvas(dims.width, dims.height, dims.channels);

  PlacementTrace trace;
  trace.mode = mode;
  trace.patch_id = patch.id();

  // Single placements on the cell grid; for a square patch this is its sparse map.
  const auto single = parallel_map(cells.size(), jobs, [&](std::size_t i) {
    return oracle.probability_of(insert_patch(black, patch.image, cells[i]), patch.class_id);
  });
  std::size_t start = 0;
  for (std::size_t i = 1; i < single.size(); ++i) {
    if (single[i] > single[start]) start = i;
  }

  std::vector<bool> occupied(cells.size(), false);
  occupied[start] = true;
  Image current = insert_patch(black, patch.image, cells[start]);
  double prob = single[start];
  trace.steps.push_back({cells[start], static_cast<int>(start), prob});

  while (trace.steps.size() < cells.size()) {
    std::vector<std::size_t> free;
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (!occupied[i]) free.push_back(i);
    }
    const auto values = parallel_map(free.size(), jobs, [&](std::size_t k) {
      return oracle.probability_of(insert_patch(current, patch.image, cells[free[k]]), patch.class_id);
    });
    std::size_t pick = 0;
    for (std::size_t k = 1; k < values.size(); ++k) {
      const bool better = mode == PlacementMode::kActivation ? values[k] > values[pick]
                                                             : values[k] < values[pick];
      if (better) pick = k;
    }
    const bool improves = mode == PlacementMode::kActivation ? values[pick] > prob : values[pick] < prob;
    if (!improves) break;
    const std::size_t cell = free[pick];
    occupied[cell] = true;
    current = insert_patch(current, patch.image, cells[cell]);
    prob = values[pick];
    trace.steps.push_back({cells[cell], static_cast<int>(cell), prob});
  }
  trace.gain = placement_gain(trace.prob_init(), trace.prob_final());
  return trace;
}

}  // namespace psyprobe
