#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "psyprobe/image.hpp"
#include "psyprobe/synthetic_oracle.hpp"

namespace testing {

/// SplitMix64; property-test input generator independent of the library RNG.
class Gen {
 public:
  explicit Gen(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next() {
    std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }
  double unit() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }
  int range(int lo, int hi) { return lo + static_cast<int>(next() % static_cast<std::uint64_t>(hi - lo + 1)); }
  bool coin() { return (next() & 1) != 0; }

  psyprobe::Image image(int h, int w, int c) {
    std::vector<double> data(static_cast<std::size_t>(h) * w * c);
    for (double& v : data) v = unit();
    return psyprobe::Image(h, w, c, std::move(data));
  }
  /// Values on the 8-bit lattice, exactly representable after PNG round-trips.
  psyprobe::Image image8(int h, int w, int c) {
    std::vector<double> data(static_cast<std::size_t>(h) * w * c);
    for (double& v : data) v = range(0, 255) / 255.0;
    return psyprobe::Image(h, w, c, std::move(data));
  }

 private:
  std::uint64_t state_;
};

/// Straight transcription of the synthetic scoring formula, summed in long
/// double in a different loop order.
inline long double naive_score(const psyprobe::SyntheticOracleSpec& spec, const psyprobe::Image& img,
                               const std::string& class_id) {
  const auto& k = spec.find(class_id);
  long double s = 0.0L;
  for (int c = 0; c < img.channels(); ++c) {
    for (int x = 0; x < img.width(); ++x) {
      for (int y = 0; y < img.height(); ++y) {
        const double w = k.sensitivity.channels == 1 ? k.sensitivity.weights[y * img.width() + x]
                                                     : k.sensitivity.weights[(y * img.width() + x) * img.channels() + c];
        s += static_cast<long double>(w) * (1.0L - std::fabs(static_cast<long double>(img.at(y, x, c)) -
                                                            k.reference.at(y, x, c)));
      }
    }
  }
  s += k.bias;
  if (spec.score_floor && s < *spec.score_floor) s = *spec.score_floor;
  return s;
}

inline std::map<std::string, double> naive_probabilities(const psyprobe::SyntheticOracleSpec& spec,
                                                         const psyprobe::Image& img) {
  std::map<std::string, long double> z;
  long double top = -INFINITY;
  for (const auto& k : spec.classes) {
    z[k.id] = naive_score(spec, img, k.id) / spec.temperature;
    top = std::max(top, z[k.id]);
  }
  long double total = 0.0L;
  for (auto& [id, v] : z) total += std::exp(v - top);
  std::map<std::string, double> out;
  for (auto& [id, v] : z) out[id] = static_cast<double>(std::exp(v - top) / total);
  return out;
}

/// Pixel-by-pixel reference of black-canvas insertion.
inline psyprobe::Image naive_on_black(const psyprobe::Image& patch, int x0, int y0, int w, int h, int c) {
  std::vector<double> data(static_cast<std::size_t>(w) * h * c, 0.0);
  for (int y = 0; y < patch.height(); ++y) {
    for (int x = 0; x < patch.width(); ++x) {
      for (int ch = 0; ch < c; ++ch) {
        data[((y0 + y) * w + x0 + x) * c + ch] = std::min(1.0, patch.at(y, x, patch.channels() == 1 ? 0 : ch));
      }
    }
  }
  return psyprobe::Image(h, w, c, std::move(data));
}

class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() /
            ("psyprobe-test-" + tag + "-" + std::to_string(rd()) + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

/// Map of `constant` weights everywhere except `value` over rect (all channels
/// when channel < 0).
inline psyprobe::WeightMap planted_map(int h, int w, int channels, const psyprobe::Rect& r, double value,
                                       double background = 0.0, int channel = -1) {
  auto m = psyprobe::WeightMap::constant(h, w, channels, background);
  for (int y = r.y; y < r.y + r.h; ++y) {
    for (int x = r.x; x < r.x + r.w; ++x) {
      for (int c = 0; c < channels; ++c) {
        if (channel < 0 || c == channel) m.weights[(static_cast<std::size_t>(y) * w + x) * channels + c] = value;
      }
    }
  }
  return m;
}

}  // namespace testing
