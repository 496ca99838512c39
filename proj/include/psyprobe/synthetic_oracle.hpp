#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "psyprobe/oracle.hpp"

namespace psyprobe {

/// Per-pixel weights; negative values plant inhibitory regions. A 1-channel
/// map applies to every image channel.
struct WeightMap {
  int height = 0;
  int width = 0;
  int channels = 1;
  std::vector<double> weights;

  static WeightMap constant(int height, int width, int channels, double value);
  double at(int y, int x, int c) const {
    return weights[(static_cast<std::size_t>(y) * width + x) * channels + (channels == 1 ? 0 : c)];
  }
  double& at(int y, int x, int c) {
    return weights[(static_cast<std::size_t>(y) * width + x) * channels + (channels == 1 ? 0 : c)];
  }
  double total() const;
};

struct SyntheticClass {
  std::string id;
  WeightMap sensitivity;
  Image reference;  // canvas-sized template
  double bias = 0.0;
};

/// Test oracle with planted spatial structure.
///
///   score_k = bias_k + sum_{y,x,c} map_k(y,x,c) * (1 - |img(y,x,c) - template_k(y,x,c)|)
///   p = softmax(score / temperature)
///
/// Scores are accumulated in 2^-56 fixed point, so the result does not depend
/// on summation order: the same multiset of per-pixel terms gives the same
/// score bit for bit.
struct SyntheticOracleSpec {
  std::string id = "synthetic";
  InputDims canvas;
  std::vector<SyntheticClass> classes;
  double temperature = 1.0;
  std::optional<double> score_floor;

  /// Throws ParameterError / DimensionError on inconsistent specs.
  void validate() const;
  const SyntheticClass& find(const std::string& class_id) const;
};

double synthetic_score(const SyntheticOracleSpec& spec, const Image& img, const std::string& class_id);
ClassProbabilities synthetic_probabilities(const SyntheticOracleSpec& spec, const Image& img);

class SyntheticOracle final : public Oracle {
 public:
  explicit SyntheticOracle(SyntheticOracleSpec spec,
                           std::uint64_t max_queries = OracleBudget::kUnlimited);

  InputDims input_dims() const override { return spec_.canvas; }
  std::string id() const override { return spec_.id; }
  const SyntheticOracleSpec& spec() const { return spec_; }

 protected:
  ClassProbabilities query(const Image& img) const override;

 private:
  SyntheticOracleSpec spec_;
};

/// Spatially uniform maps and constant templates: any patch scores the same at
/// every position of a black canvas.
SyntheticOracleSpec uniform_synthetic_spec(InputDims canvas, int n_classes, double weight = 1.0,
                                           double temperature = 1.0);

/// Seeded random oracle: each class gets Gaussian activator/inhibitor blobs and
/// a blocky template. Maps are scaled so every class map sums to `mass`.
SyntheticOracleSpec random_synthetic_spec(InputDims canvas, int n_classes, std::uint64_t seed,
                                          double mass = 40.0, double temperature = 1.0);

}  // namespace psyprobe
