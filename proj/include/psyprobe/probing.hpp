#pragma once

#include <span>
#include <string>
#include <vector>

#include "psyprobe/image.hpp"
#include "psyprobe/oracle.hpp"

namespace psyprobe {

struct PatchSource {
  std::string image_id;
  Rect window;
  int window_size = 0;
};

/// Image fragment together with the probability it elicited.
struct Patch {
  Image image;
  std::string class_id;
  double probability = 0.0;
  PatchSource source;
  std::string oracle_id;

  /// "<image_id>@<x>,<y>,<w>x<h>"; stable and unique per window.
  std::string id() const;
};

struct SourceImage {
  std::string id;
  Image image;
};

/// How a candidate window is shown to the oracle during extraction.
enum class WindowPresentation {
  kInPlace,  // window kept at its position, everything else black
  kResized,  // window resized to the full oracle input
};

struct ExtractionOptions {
  WindowPresentation presentation = WindowPresentation::kInPlace;
  int jobs = 1;
};

/// Non-overlapping windows of every size (stride = size), ordered by size
/// descending then row-major.
std::vector<Rect> enumerate_windows(int img_w, int img_h, std::span<const int> window_sizes);

/// Best-probability window over four source images. Sources are resized to
/// the oracle input first. Ties go to the larger window, then the earlier
/// image, then the earlier row-major position.
Patch extract_best_patch(std::span<const SourceImage> images, const std::string& class_id,
                         std::span<const int> window_sizes, Oracle& oracle,
                         const ExtractionOptions& options = {});

struct LocalCurvePoint {
  int scale = 0;
  double resized_mean = 0.0;   // patch stretched to the oracle input
  double embedded_mean = 0.0;  // patch at native size, centered on black
};

/// Mean class probability per scale. Every patch is first resampled to
/// scale x scale.
std::vector<LocalCurvePoint> local_property_curve(std::span<const Patch> patches,
                                                  std::span<const int> scales, Oracle& oracle,
                                                  int jobs = 1);

/// Probability of class_id for `image` added to a black oracle canvas at (x, y).
double embedded_probability(const Image& image, const std::string& class_id, int x, int y,
                            Oracle& oracle);

/// Placement positions and the probability of the patch's class at each.
struct ProbabilityMap {
  std::vector<Rect> positions;
  std::vector<double> values;
  int stride = 0;
  std::string patch_id;
};

/// Top-left corners stepping by stride while the patch stays inside the canvas.
std::vector<Rect> placement_positions(int canvas_w, int canvas_h, int patch_w, int patch_h, int stride);

/// One oracle query per position, on a black canvas the size of the oracle input.
ProbabilityMap spatial_map(const Patch& patch, int stride, Oracle& oracle, int jobs = 1);

struct SpatialStats {
  double ratio = 1.0;  // max/min, +inf when min == 0 < max
  double max = 0.0;
  double min = 0.0;
  Rect argmax;
  Rect argmin;
  std::size_t argmax_index = 0;
  std::size_t argmin_index = 0;
};

SpatialStats spatial_stats(const ProbabilityMap& map);

/// Averages for one oracle, mirroring a summary table row.
struct SpatialSummary {
  std::string oracle_id;
  double avg_ratio = 0.0;
  double avg_max = 0.0;
  double avg_min = 0.0;
};

SpatialSummary summarize_spatial(const std::string& oracle_id, std::span<const SpatialStats> stats);

enum class PlacementMode { kActivation, kInhibition };

std::string_view to_string(PlacementMode mode);

struct PlacementStep {
  Rect cell;
  int cell_index = 0;
  double prob_after = 0.0;
};

struct PlacementTrace {
  std::vector<PlacementStep> steps;
  PlacementMode mode = PlacementMode::kActivation;
  double gain = 1.0;
  std::string patch_id;

  double prob_init() const { return steps.front().prob_after; }
  double prob_final() const { return steps.back().prob_after; }
};

/// final / init, with 0/0 = 1 and x/0 = +inf.
double placement_gain(double prob_init, double prob_final);

/// Black canvas with `patch` added at every cell, in the given order.
Image compose_placements(const Image& canvas, const Image& patch, std::span<const Rect> cells);

/// Greedy repeated placement on the grid of patch-sized cells. The first
/// placement is the single-placement argmax in both modes; later placements
/// are accepted only while they strictly raise (activation) or lower
/// (inhibition) the probability.
PlacementTrace greedy_cumulative(const Patch& patch, PlacementMode mode, Oracle& oracle, int jobs = 1);

}  // namespace psyprobe
