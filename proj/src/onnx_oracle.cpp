#include "psyprobe/onnx_oracle.hpp"

#include <cmath>
#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "onnx_model.hpp"
#include "psyprobe/error.hpp"
#include "psyprobe/image_io.hpp"

namespace psyprobe {

ModelManifest ModelManifest::parse(const std::string& json_text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(json_text);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError({fmt::format("manifest is not valid JSON: {}", e.what())});
  }
  std::vector<std::string> problems;
  ModelManifest m;
  auto read = [&](const char* key, auto& out) {
    if (!j.contains(key)) {
      problems.push_back(fmt::format("manifest: missing key '{}'", key));
      return;
    }
    try {
      j.at(key).get_to(out);
    } catch (const nlohmann::json::exception&) {
      problems.push_back(fmt::format("manifest: key '{}' has the wrong type", key));
    }
  };
  read("input_w", m.input_w);
  read("input_h", m.input_h);
  read("mean", m.mean);
  read("std", m.std);
  read("labels", m.labels);
  if (problems.empty()) {
    if (m.input_w <= 0 || m.input_h <= 0) problems.push_back("manifest: input dims must be positive");
    if (m.mean.size() != 1 && m.mean.size() != 3) problems.push_back("manifest: mean must have 1 or 3 entries");
    if (m.std.size() != m.mean.size()) problems.push_back("manifest: std and mean differ in length");
    for (double s : m.std) {
      if (!(s > 0.0)) problems.push_back("manifest: std entries must be positive");
    }
    if (m.labels.empty()) problems.push_back("manifest: labels must not be empty");
  }
  if (!problems.empty()) throw ConfigError(std::move(problems));
  return m;
}

ModelManifest ModelManifest::load(const std::filesystem::path& path) {
  const auto bytes = read_file_bytes(path);
  return parse(std::string(bytes.begin(), bytes.end()));
}

std::string ModelManifest::to_json() const {
  return nlohmann::json{{"input_w", input_w}, {"input_h", input_h}, {"mean", mean},
                        {"std", std},         {"labels", labels}}
      .dump();
}

OnnxOracle::OnnxOracle(const std::filesystem::path& model_path,
                       const std::filesystem::path& manifest_path, std::uint64_t max_queries)
    : Oracle(max_queries),
      model_(std::make_unique<onnx_runtime::Model>(onnx_runtime::Model::load(model_path))),
      manifest_(ModelManifest::load(manifest_path)),
      id_(fmt::format("onnx:{}", model_path.filename().string())) {
  check_model();
}

OnnxOracle::OnnxOracle(std::span<const std::uint8_t> model_bytes, ModelManifest manifest,
                       std::string id, std::uint64_t max_queries)
    : Oracle(max_queries),
      model_(std::make_unique<onnx_runtime::Model>(onnx_runtime::Model::parse(model_bytes))),
      manifest_(std::move(manifest)),
      id_(std::move(id)) {
  check_model();
}

OnnxOracle::~OnnxOracle() = default;

void OnnxOracle::check_model() const {
  const auto& shape = model_->input_shape();
  const std::vector<std::int64_t> declared{1, static_cast<std::int64_t>(manifest_.mean.size()),
                                           manifest_.input_h, manifest_.input_w};
  if (shape.size() != 4) {
    throw InputError(fmt::format("model input has rank {}, expected NCHW", shape.size()));
  }
  for (std::size_t i = 0; i < 4; ++i) {
    if (shape[i] >= 0 && shape[i] != declared[i]) {
      throw InputError(fmt::format("model input dim {} is {} but the manifest declares {}", i,
                                   shape[i], declared[i]));
    }
  }
}

InputDims OnnxOracle::input_dims() const {
  return {manifest_.input_w, manifest_.input_h, static_cast<int>(manifest_.mean.size())};
}

std::vector<float> OnnxOracle::raw_output(const Image& img) const {
  const InputDims dims = input_dims();
  const int ch = dims.channels;
  std::vector<float> input(static_cast<std::size_t>(ch) * dims.height * dims.width);
  for (int c = 0; c < ch; ++c) {
    for (int y = 0; y < dims.height; ++y) {
      for (int x = 0; x < dims.width; ++x) {
        input[(static_cast<std::size_t>(c) * dims.height + y) * dims.width + x] =
            static_cast<float>((img.at(y, x, c) - manifest_.mean[c]) / manifest_.std[c]);
      }
    }
  }
  const auto out = model_->run(onnx_runtime::Tensor::floats({1, ch, dims.height, dims.width}, std::move(input)));
  if (out.integer || out.values.size() != manifest_.labels.size()) {
    throw ProtocolError(fmt::format("model produced {} outputs for {} labels", out.numel(),
                                    manifest_.labels.size()));
  }
  return out.values;
}

ClassProbabilities OnnxOracle::query(const Image& img) const {
  const auto raw = raw_output(img);
  std::vector<double> p(raw.begin(), raw.end());
  double total = 0.0;
  bool is_distribution = true;
  for (double v : p) {
    if (!(v >= 0.0 && v <= 1.0)) is_distribution = false;
    total += v;
  }
  if (!is_distribution || std::abs(total - 1.0) > 1e-3) {
    const double top = *std::max_element(p.begin(), p.end());
    total = 0.0;
    for (double& v : p) total += v = std::exp(v - top);
  }
  std::map<std::string, double> entries;
  for (std::size_t i = 0; i < p.size(); ++i) entries[manifest_.labels[i]] = p[i] / total;
  return ClassProbabilities(std::move(entries));
}

}  // namespace psyprobe
