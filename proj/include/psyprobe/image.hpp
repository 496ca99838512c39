#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace psyprobe {

/// Axis-aligned pixel rectangle; (x, y) is the top-left corner.
struct Rect {
  int x = 0;
  int y = 0;
  int w = 0;
  int h = 0;

  int area() const { return w * h; }
  friend bool operator==(const Rect&, const Rect&) = default;
};

/// H x W x C buffer of intensities in [0,1], row-major and channel-interleaved.
///
/// The [0,1] invariant is checked on construction and by set(); every operation
/// in this header returns images that satisfy it.
class Image {
 public:
  Image() = default;
  Image(int height, int width, int channels, double fill = 0.0);
  Image(int height, int width, int channels, std::vector<double> data);

  int height() const { return height_; }
  int width() const { return width_; }
  int channels() const { return channels_; }
  bool empty() const { return data_.empty(); }
  std::size_t size() const { return data_.size(); }

  std::size_t index(int y, int x, int c) const {
    return (static_cast<std::size_t>(y) * width_ + x) * channels_ + c;
  }
  double at(int y, int x, int c = 0) const { return data_[index(y, x, c)]; }
  void set(int y, int x, int c, double value);

  std::span<const double> data() const { return data_; }
  Rect bounds() const { return {0, 0, width_, height_}; }

  friend bool operator==(const Image&, const Image&) = default;

 private:
  int height_ = 0;
  int width_ = 0;
  int channels_ = 0;
  std::vector<double> data_;
};

/// Tiling of an image into cols x rows equal, non-overlapping cells.
struct Grid {
  int cell_w = 0;
  int cell_h = 0;
  int cols = 0;
  int rows = 0;

  int cell_count() const { return cols * rows; }
  int width() const { return cols * cell_w; }
  int height() const { return rows * cell_h; }
  /// Row-major cell rectangles.
  std::vector<Rect> cells() const;
  Rect cell(int index) const;

  /// Grid of cols x rows cells covering an img_w x img_h image exactly.
  static Grid covering(int img_w, int img_h, int cols, int rows);
  friend bool operator==(const Grid&, const Grid&) = default;
};

/// A normalized patch attenuated by the transparency coefficient.
struct Decoy {
  Image pixels;  // single channel, values in [0, 1/tau]
  double tau = 1.0;
  std::string source_patch_id;
  double std = 0.0;
};

Image make_black_canvas(int w, int h, int channels);

Image crop(const Image& img, const Rect& r);

/// Corner-aligned bilinear resampling.
Image resize(const Image& img, int w, int h);

/// canvas + patch over pos, clamped to [0,1]. A 1-channel patch is added to
/// every canvas channel.
Image insert_patch(const Image& canvas, const Image& patch, const Rect& pos);

/// Row-major square tiling; throws TilingError when cell does not divide both sides.
std::vector<Rect> grid_cells(int img_w, int img_h, int cell);
std::vector<Rect> grid_cells(int img_w, int img_h, int cell_w, int cell_h);

/// Min-max normalization to [0,1]; a constant patch maps to zeros.
Image normalize_patch(const Image& patch);

Image make_decoy_pixels(const Image& patch, double tau);
Decoy make_decoy(const Image& patch, double tau, std::string source_patch_id = {});

/// Channel with the lowest mean over region, lowest index on ties.
int weakest_channel(const Image& img, const Rect& region);

/// Adds the decoy into the weakest channel of target over cell.
Image apply_decoy(const Image& target, const Decoy& decoy, const Rect& cell);

/// |N(0, std_255/255)| samples clamped to [0,1], one channel.
Image gaussian_noise_image(int w, int h, double std_255, std::uint64_t seed);

/// Attenuates an already [0,1] noise buffer by tau without min-max normalization.
Decoy make_noise_decoy(const Image& noise, double tau, std::string source_id = {});

/// Gray<->RGB conversion: 1->3 replicates, 3->1 averages.
Image to_channels(const Image& img, int channels);

double population_std(std::span<const double> values);
double mean(std::span<const double> values);

/// Max absolute per-element difference; images must share dims.
double linf_distance(const Image& a, const Image& b);

bool rect_within(const Rect& r, int width, int height);

}  // namespace psyprobe
