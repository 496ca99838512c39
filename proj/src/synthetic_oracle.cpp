#include "psyprobe/synthetic_oracle.hpp"

#include <algorithm>
#include <cmath>
#include <fmt/format.h>
#include <set>

#include "psyprobe/error.hpp"
#include "psyprobe/rng.hpp"

namespace psyprobe {
namespace {

constexpr int kFixedPointBits = 56;

class FixedPointSum {
 public:
  void add(double term) {
    acc_ += static_cast<__int128>(std::nearbyint(std::ldexp(term, kFixedPointBits)));
  }
  double value() const { return std::ldexp(static_cast<double>(acc_), -kFixedPointBits); }

 private:
  __int128 acc_ = 0;
};

std::string class_name(int k) { return fmt::format("class_{:02d}", k); }

}  // namespace

WeightMap WeightMap::constant(int height, int width, int channels, double value) {
  return {height, width, channels,
          std::vector<double>(static_cast<std::size_t>(height) * width * channels, value)};
}

double WeightMap::total() const {
  double s = 0.0;
  for (double w : weights) s += w;
  return s;
}

void SyntheticOracleSpec::validate() const {
  if (canvas.width <= 0 || canvas.height <= 0 || (canvas.channels != 1 && canvas.channels != 3)) {
    throw DimensionError(fmt::format("invalid synthetic canvas {}x{}x{}", canvas.width,
                                     canvas.height, canvas.channels));
  }
  if (classes.empty()) throw ParameterError("synthetic oracle needs at least one class");
  if (!(temperature > 0.0) || !std::isfinite(temperature)) {
    throw ParameterError(fmt::format("temperature must be positive, got {}", temperature));
  }
  std::set<std::string> seen;
  for (const auto& k : classes) {
    if (k.id.empty() || !seen.insert(k.id).second) {
      throw ParameterError(fmt::format("class id '{}' is empty or duplicated", k.id));
    }
    const auto& m = k.sensitivity;
    if (m.width != canvas.width || m.height != canvas.height ||
        (m.channels != 1 && m.channels != canvas.channels) ||
        m.weights.size() != static_cast<std::size_t>(m.width) * m.height * m.channels) {
      throw DimensionError(fmt::format("sensitivity map of '{}' does not match the canvas", k.id));
    }
    for (double w : m.weights) {
      if (!std::isfinite(w)) throw ParameterError(fmt::format("non-finite weight in '{}'", k.id));
    }
    if (k.reference.width() != canvas.width || k.reference.height() != canvas.height ||
        k.reference.channels() != canvas.channels) {
      throw DimensionError(fmt::format("template of '{}' does not match the canvas", k.id));
    }
  }
}

const SyntheticClass& SyntheticOracleSpec::find(const std::string& class_id) const {
  for (const auto& k : classes) {
    if (k.id == class_id) return k;
  }
  throw ClassError(fmt::format("unknown class '{}'", class_id));
}

double synthetic_score(const SyntheticOracleSpec& spec, const Image& img, const std::string& class_id) {
  const SyntheticClass& k = spec.find(class_id);
  if (img.width() != spec.canvas.width || img.height() != spec.canvas.height ||
      img.channels() != spec.canvas.channels) {
    throw InputError("image does not match the synthetic canvas");
  }
  FixedPointSum sum;
  const auto pixels = img.data();
  const auto reference = k.reference.data();
  const int ch = img.channels();
  std::size_t i = 0;
  for (int y = 0; y < img.height(); ++y) {
    for (int x = 0; x < img.width(); ++x) {
      for (int c = 0; c < ch; ++c, ++i) {
        const double w = k.sensitivity.at(y, x, c);
        if (w == 0.0) continue;
        sum.add(w * (1.0 - std::abs(pixels[i] - reference[i])));
      }
    }
  }
  double score = k.bias + sum.value();
  if (spec.score_floor) score = std::max(score, *spec.score_floor);
  return score;
}

ClassProbabilities synthetic_probabilities(const SyntheticOracleSpec& spec, const Image& img) {
  std::vector<double> z;
  z.reserve(spec.classes.size());
  for (const auto& k : spec.classes) z.push_back(synthetic_score(spec, img, k.id) / spec.temperature);
  const double top = *std::max_element(z.begin(), z.end());
  double total = 0.0;
  for (double& v : z) {
    v = std::exp(v - top);
    total += v;
  }
  std::map<std::string, double> entries;
  for (std::size_t i = 0; i < z.size(); ++i) entries[spec.classes[i].id] = z[i] / total;
  return ClassProbabilities(std::move(entries));
}

SyntheticOracle::SyntheticOracle(SyntheticOracleSpec spec, std::uint64_t max_queries)
    : Oracle(max_queries), spec_(std::move(spec)) {
  spec_.validate();
}

ClassProbabilities SyntheticOracle::query(const Image& img) const {
  return synthetic_probabilities(spec_, img);
}

SyntheticOracleSpec uniform_synthetic_spec(InputDims canvas, int n_classes, double weight,
                                           double temperature) {
  if (n_classes < 1) throw ParameterError("need at least one class");
  SyntheticOracleSpec spec;
  spec.id = "synthetic-uniform";
  spec.canvas = canvas;
  spec.temperature = temperature;
  for (int k = 0; k < n_classes; ++k) {
    const double level = n_classes == 1 ? 0.5 : static_cast<double>(k) / (n_classes - 1);
    spec.classes.push_back({class_name(k),
                            WeightMap::constant(canvas.height, canvas.width, 1, weight),
                            Image(canvas.height, canvas.width, canvas.channels, level), 0.0});
  }
  spec.validate();
  return spec;
}

SyntheticOracleSpec random_synthetic_spec(InputDims canvas, int n_classes, std::uint64_t seed,
                                          double mass, double temperature) {
  if (n_classes < 1) throw ParameterError("need at least one class");
  Rng rng(seed);
  SyntheticOracleSpec spec;
  spec.id = fmt::format("synthetic-random-{}", seed);
  spec.canvas = canvas;
  spec.temperature = temperature;
  const int w = canvas.width;
  const int h = canvas.height;
  const double sigma = std::max(1.0, std::min(w, h) / 6.0);
  const int block = std::max(1, std::min(w, h) / 8);

  for (int k = 0; k < n_classes; ++k) {
    WeightMap map = WeightMap::constant(h, w, 1, 0.0);
    const int blobs = 2 + static_cast<int>(rng.uniform_int(2));
    for (int b = 0; b < blobs; ++b) {
      const double cx = rng.uniform(0.0, w);
      const double cy = rng.uniform(0.0, h);
      // The last blob of every other class is an inhibitor.
      const double amp = (b == blobs - 1 && k % 2 == 1) ? -0.5 : rng.uniform(0.5, 1.0);
      for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
          const double d2 = (x - cx) * (x - cx) + (y - cy) * (y - cy);
          map.at(y, x, 0) += amp * std::exp(-d2 / (2.0 * sigma * sigma));
        }
      }
    }
    double abs_total = 0.0;
    for (double v : map.weights) abs_total += std::abs(v);
    for (double& v : map.weights) v *= mass / abs_total;

    const int bw = (w + block - 1) / block;
    const int bh = (h + block - 1) / block;
    std::vector<double> levels(static_cast<std::size_t>(bw) * bh);
    for (double& v : levels) v = rng.uniform();
    std::vector<double> data(static_cast<std::size_t>(w) * h * canvas.channels);
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        for (int c = 0; c < canvas.channels; ++c) {
          data[(static_cast<std::size_t>(y) * w + x) * canvas.channels + c] =
              levels[static_cast<std::size_t>(y / block) * bw + x / block];
        }
      }
    }
    spec.classes.push_back({class_name(k), std::move(map),
                            Image(h, w, canvas.channels, std::move(data)), rng.uniform(-1.0, 1.0)});
  }
  spec.validate();
  return spec;
}

}  // namespace psyprobe
