#include "psyprobe/image.hpp"

#include <algorithm>
#include <cmath>
#include <fmt/format.h>

#include "psyprobe/error.hpp"
#include "psyprobe/rng.hpp"

namespace psyprobe {
namespace {

void check_dims(int height, int width, int channels) {
  if (height <= 0 || width <= 0) {
    throw DimensionError(fmt::format("image dimensions must be positive, got {}x{}", width, height));
  }
  if (channels != 1 && channels != 3) {
    throw DimensionError(fmt::format("channels must be 1 or 3, got {}", channels));
  }
}

double clamp01(double v) { return std::clamp(v, 0.0, 1.0); }

}  // namespace

Image::Image(int height, int width, int channels, double fill)
    : height_(height), width_(width), channels_(channels) {
  check_dims(height, width, channels);
  if (!(fill >= 0.0 && fill <= 1.0)) {
    throw ParameterError(fmt::format("fill intensity {} outside [0,1]", fill));
  }
  data_.assign(static_cast<std::size_t>(height) * width * channels, fill);
}

Image::Image(int height, int width, int channels, std::vector<double> data)
    : height_(height), width_(width), channels_(channels), data_(std::move(data)) {
  check_dims(height, width, channels);
  if (data_.size() != static_cast<std::size_t>(height) * width * channels) {
    throw DimensionError(fmt::format("data length {} does not match {}x{}x{}", data_.size(),
                                     height, width, channels));
  }
  for (double v : data_) {
    if (!(v >= 0.0 && v <= 1.0)) {
      throw ParameterError(fmt::format("intensity {} outside [0,1]", v));
    }
  }
}

void Image::set(int y, int x, int c, double value) {
  if (!(value >= 0.0 && value <= 1.0)) {
    throw ParameterError(fmt::format("intensity {} outside [0,1]", value));
  }
  data_[index(y, x, c)] = value;
}

std::vector<Rect> Grid::cells() const {
  std::vector<Rect> out;
  out.reserve(static_cast<std::size_t>(cell_count()));
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) out.push_back({c * cell_w, r * cell_h, cell_w, cell_h});
  }
  return out;
}

Rect Grid::cell(int index) const {
  return {(index % cols) * cell_w, (index / cols) * cell_h, cell_w, cell_h};
}

Grid Grid::covering(int img_w, int img_h, int cols, int rows) {
  if (cols <= 0 || rows <= 0) throw TilingError("grid must have at least one column and row");
  if (img_w % cols != 0 || img_h % rows != 0) {
    throw TilingError(fmt::format("{}x{} grid does not tile a {}x{} image", cols, rows, img_w, img_h));
  }
  return {img_w / cols, img_h / rows, cols, rows};
}

bool rect_within(const Rect& r, int width, int height) {
  return r.w > 0 && r.h > 0 && r.x >= 0 && r.y >= 0 && r.x <= width - r.w && r.y <= height - r.h;
}

Image make_black_canvas(int w, int h, int channels) { return Image(h, w, channels, 0.0); }

Image crop(const Image& img, const Rect& r) {
  if (!rect_within(r, img.width(), img.height())) {
    throw BoundsError(fmt::format("rect ({},{},{},{}) outside {}x{} image", r.x, r.y, r.w, r.h,
                                  img.width(), img.height()));
  }
  const int ch = img.channels();
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(r.area()) * ch);
  const auto src = img.data();
  for (int i = 0; i < r.h; ++i) {
    const auto row = src.subspan(img.index(r.y + i, r.x, 0), static_cast<std::size_t>(r.w) * ch);
    out.insert(out.end(), row.begin(), row.end());
  }
  return Image(r.h, r.w, ch, std::move(out));
}

Image resize(const Image& img, int w, int h) {
  if (w <= 0 || h <= 0) {
    throw DimensionError(fmt::format("resize target must be positive, got {}x{}", w, h));
  }
  const int ch = img.channels();
  const int in_w = img.width();
  const int in_h = img.height();
  auto source_coord = [](int i, int out_n, int in_n) {
    if (out_n == 1 || in_n == 1) return 0.0;
    return static_cast<double>(i) * (in_n - 1) / (out_n - 1);
  };

  std::vector<double> out(static_cast<std::size_t>(w) * h * ch);
  std::size_t k = 0;
  for (int i = 0; i < h; ++i) {
    const double sy = source_coord(i, h, in_h);
    const int y0 = static_cast<int>(std::floor(sy));
    const int y1 = std::min(y0 + 1, in_h - 1);
    const double fy = sy - y0;
    for (int j = 0; j < w; ++j) {
      const double sx = source_coord(j, w, in_w);
      const int x0 = static_cast<int>(std::floor(sx));
      const int x1 = std::min(x0 + 1, in_w - 1);
      const double fx = sx - x0;
      for (int c = 0; c < ch; ++c) {
        const double a = img.at(y0, x0, c);
        const double b = img.at(y0, x1, c);
        const double d = img.at(y1, x0, c);
        const double e = img.at(y1, x1, c);
        const double top = a + fx * (b - a);
        const double bottom = d + fx * (e - d);
        out[k++] = clamp01(top + fy * (bottom - top));
      }
    }
  }
  return Image(h, w, ch, std::move(out));
}

Image insert_patch(const Image& canvas, const Image& patch, const Rect& pos) {
  if (patch.width() != pos.w || patch.height() != pos.h) {
    throw DimensionError(fmt::format("patch {}x{} does not match position {}x{}", patch.width(),
                                     patch.height(), pos.w, pos.h));
  }
  if (!rect_within(pos, canvas.width(), canvas.height())) {
    throw DimensionError(fmt::format("position ({},{},{},{}) outside {}x{} canvas", pos.x, pos.y,
                                     pos.w, pos.h, canvas.width(), canvas.height()));
  }
  if (patch.channels() != 1 && patch.channels() != canvas.channels()) {
    throw DimensionError(fmt::format("cannot insert {}-channel patch into {}-channel canvas",
                                     patch.channels(), canvas.channels()));
  }
  std::vector<double> out(canvas.data().begin(), canvas.data().end());
  const int ch = canvas.channels();
  const bool broadcast = patch.channels() == 1;
  for (int i = 0; i < pos.h; ++i) {
    for (int j = 0; j < pos.w; ++j) {
      for (int c = 0; c < ch; ++c) {
        double& v = out[canvas.index(pos.y + i, pos.x + j, c)];
        v = clamp01(v + patch.at(i, j, broadcast ? 0 : c));
      }
    }
  }
  return Image(canvas.height(), canvas.width(), ch, std::move(out));
}

std::vector<Rect> grid_cells(int img_w, int img_h, int cell) {
  return grid_cells(img_w, img_h, cell, cell);
}

std::vector<Rect> grid_cells(int img_w, int img_h, int cell_w, int cell_h) {
  if (img_w <= 0 || img_h <= 0 || cell_w <= 0 || cell_h <= 0) {
    throw TilingError("grid dimensions must be positive");
  }
  if (img_w % cell_w != 0 || img_h % cell_h != 0) {
    throw TilingError(fmt::format("{}x{} cells do not tile a {}x{} image", cell_w, cell_h, img_w,
                                  img_h));
  }
  return Grid{cell_w, cell_h, img_w / cell_w, img_h / cell_h}.cells();
}

Image normalize_patch(const Image& patch) {
  const auto src = patch.data();
  const auto [lo_it, hi_it] = std::minmax_element(src.begin(), src.end());
  const double lo = *lo_it;
  const double range = *hi_it - lo;
  std::vector<double> out(src.size(), 0.0);
  if (range > 0.0) {
    for (std::size_t i = 0; i < src.size(); ++i) out[i] = clamp01((src[i] - lo) / range);
  }
  return Image(patch.height(), patch.width(), patch.channels(), std::move(out));
}

Image make_decoy_pixels(const Image& patch, double tau) {
  if (!(tau >= 1.0) || !std::isfinite(tau)) {
    throw ParameterError(fmt::format("transparency coefficient must be >= 1, got {}", tau));
  }
  if (patch.channels() != 1) {
    throw DimensionError(fmt::format("decoys are built from 1-channel patches, got {} channels",
                                     patch.channels()));
  }
  const Image normalized = normalize_patch(patch);
  std::vector<double> out(normalized.data().begin(), normalized.data().end());
  for (double& v : out) v /= tau;
  return Image(patch.height(), patch.width(), 1, std::move(out));
}

Decoy make_decoy(const Image& patch, double tau, std::string source_patch_id) {
  Image pixels = make_decoy_pixels(patch, tau);
  const double std = population_std(pixels.data());
  return {std::move(pixels), tau, std::move(source_patch_id), std};
}

int weakest_channel(const Image& img, const Rect& region) {
  if (!rect_within(region, img.width(), img.height())) {
    throw BoundsError(fmt::format("region ({},{},{},{}) outside {}x{} image", region.x, region.y,
                                  region.w, region.h, img.width(), img.height()));
  }
  if (img.channels() == 1) return 0;
  std::vector<double> sums(static_cast<std::size_t>(img.channels()), 0.0);
  for (int i = 0; i < region.h; ++i) {
    for (int j = 0; j < region.w; ++j) {
      for (int c = 0; c < img.channels(); ++c) sums[c] += img.at(region.y + i, region.x + j, c);
    }
  }
  // Equal areas, so comparing sums is comparing means.
  int best = 0;
  for (int c = 1; c < img.channels(); ++c) {
    if (sums[c] < sums[best]) best = c;
  }
  return best;
}

Image apply_decoy(const Image& target, const Decoy& decoy, const Rect& cell) {
  const Image& d = decoy.pixels;
  if (d.width() != cell.w || d.height() != cell.h || d.channels() != 1) {
    throw DimensionError(fmt::format("decoy {}x{}x{} does not match cell {}x{}", d.width(),
                                     d.height(), d.channels(), cell.w, cell.h));
  }
  if (!rect_within(cell, target.width(), target.height())) {
    throw DimensionError(fmt::format("cell ({},{},{},{}) outside {}x{} target", cell.x, cell.y,
                                     cell.w, cell.h, target.width(), target.height()));
  }
  const int channel = weakest_channel(target, cell);
  std::vector<double> out(target.data().begin(), target.data().end());
  for (int i = 0; i < cell.h; ++i) {
    for (int j = 0; j < cell.w; ++j) {
      double& v = out[target.index(cell.y + i, cell.x + j, channel)];
      v = clamp01(v + d.at(i, j));
    }
  }
  return Image(target.height(), target.width(), target.channels(), std::move(out));
}

Image gaussian_noise_image(int w, int h, double std_255, std::uint64_t seed) {
  if (!(std_255 > 0.0) || !std::isfinite(std_255)) {
    throw ParameterError(fmt::format("noise std must be positive, got {}", std_255));
  }
  if (w <= 0 || h <= 0) throw DimensionError("noise dimensions must be positive");
  Rng rng(seed);
  const double sigma = std_255 / 255.0;
  std::vector<double> out(static_cast<std::size_t>(w) * h);
  for (double& v : out) v = clamp01(std::abs(rng.normal() * sigma));
  return Image(h, w, 1, std::move(out));
}

Decoy make_noise_decoy(const Image& noise, double tau, std::string source_id) {
  if (!(tau >= 1.0) || !std::isfinite(tau)) {
    throw ParameterError(fmt::format("transparency coefficient must be >= 1, got {}", tau));
  }
  if (noise.channels() != 1) throw DimensionError("noise decoys must be 1-channel");
  std::vector<double> out(noise.data().begin(), noise.data().end());
  for (double& v : out) v /= tau;
  Image pixels(noise.height(), noise.width(), 1, std::move(out));
  const double std = population_std(pixels.data());
  return {std::move(pixels), tau, std::move(source_id), std};
}

Image to_channels(const Image& img, int channels) {
  if (img.channels() == channels) return img;
  if (channels != 1 && channels != 3) {
    throw DimensionError(fmt::format("cannot convert to {} channels", channels));
  }
  const std::size_t pixels = static_cast<std::size_t>(img.width()) * img.height();
  std::vector<double> out;
  out.reserve(pixels * channels);
  const auto src = img.data();
  if (channels == 3) {
    for (double v : src) out.insert(out.end(), {v, v, v});
  } else {
    for (std::size_t p = 0; p < pixels; ++p) {
      out.push_back(clamp01((src[3 * p] + src[3 * p + 1] + src[3 * p + 2]) / 3.0));
    }
  }
  return Image(img.height(), img.width(), channels, std::move(out));
}

double mean(std::span<const double> values) {
  if (values.empty()) return 0.0;
  double sum = 0.0;
  for (double v : values) sum += v;
  return sum / static_cast<double>(values.size());
}

double population_std(std::span<const double> values) {
  if (values.empty()) return 0.0;
  const double m = mean(values);
  double acc = 0.0;
  for (double v : values) acc += (v - m) * (v - m);
  return std::sqrt(acc / static_cast<double>(values.size()));
}

double linf_distance(const Image& a, const Image& b) {
  if (a.width() != b.width() || a.height() != b.height() || a.channels() != b.channels()) {
    throw DimensionError("linf_distance requires images of equal dimensions");
  }
  double worst = 0.0;
  const auto da = a.data();
  const auto db = b.data();
  for (std::size_t i = 0; i < da.size(); ++i) worst = std::max(worst, std::abs(da[i] - db[i]));
  return worst;
}

}  // namespace psyprobe
