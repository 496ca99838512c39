#pragma once

#include <array>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "psyprobe/oracle.hpp"

namespace psyprobe {

namespace onnx_runtime {
class Model;
}

/// Sidecar manifest next to a model file:
/// {"input_w": int, "input_h": int, "mean": [..], "std": [..], "labels": [..]}.
/// The channel count is the length of mean (1 or 3).
struct ModelManifest {
  int input_w = 0;
  int input_h = 0;
  std::vector<double> mean;
  std::vector<double> std;
  std::vector<std::string> labels;

  static ModelManifest parse(const std::string& json_text);
  static ModelManifest load(const std::filesystem::path& path);
  std::string to_json() const;
};

/// Local model-file backend. Pixels are normalized per channel as
/// (v - mean) / std and fed as a 1 x C x H x W float tensor. A model whose
/// output is not already a probability vector gets a softmax.
class OnnxOracle final : public Oracle {
 public:
  OnnxOracle(const std::filesystem::path& model_path, const std::filesystem::path& manifest_path,
             std::uint64_t max_queries = OracleBudget::kUnlimited);
  OnnxOracle(std::span<const std::uint8_t> model_bytes, ModelManifest manifest,
             std::string id = "onnx", std::uint64_t max_queries = OracleBudget::kUnlimited);
  ~OnnxOracle() override;

  InputDims input_dims() const override;
  std::string id() const override { return id_; }
  const ModelManifest& manifest() const { return manifest_; }

  /// Raw model output for an image, before any softmax.
  std::vector<float> raw_output(const Image& img) const;

 protected:
  ClassProbabilities query(const Image& img) const override;

 private:
  void check_model() const;

  std::unique_ptr<onnx_runtime::Model> model_;
  ModelManifest manifest_;
  std::string id_;
};

}  // namespace psyprobe
