#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace psyprobe::onnx_runtime {

/// Dense tensor holding either float or int64 elements.
struct Tensor {
  std::vector<std::int64_t> shape;
  std::vector<float> values;
  std::vector<std::int64_t> ints;
  bool integer = false;

  std::size_t numel() const;
  static Tensor floats(std::vector<std::int64_t> shape, std::vector<float> values);
  static Tensor int64s(std::vector<std::int64_t> shape, std::vector<std::int64_t> ints);
};

struct Attribute {
  std::int64_t i = 0;
  float f = 0.0f;
  std::string s;
  std::vector<std::int64_t> ints;
  std::vector<float> floats;
  Tensor t;
};

struct Node {
  std::string op;
  std::string name;
  std::vector<std::string> inputs;
  std::vector<std::string> outputs;
  std::map<std::string, Attribute> attributes;

  std::int64_t attr_int(const std::string& key, std::int64_t fallback) const;
  float attr_float(const std::string& key, float fallback) const;
  std::vector<std::int64_t> attr_ints(const std::string& key, std::vector<std::int64_t> fallback = {}) const;
  std::string attr_string(const std::string& key, std::string fallback = {}) const;
};

/// Reference interpreter for small float ONNX classifiers (Conv/Pool/Gemm
/// style graphs). Nodes are executed in file order, which ONNX requires to be
/// topological.
class Model {
 public:
  static Model parse(std::span<const std::uint8_t> bytes);
  static Model load(const std::filesystem::path& path);

  /// Runs the graph on a single input and returns the first graph output.
  Tensor run(const Tensor& input) const;

  const std::string& input_name() const { return input_name_; }
  const std::vector<std::int64_t>& input_shape() const { return input_shape_; }
  std::int64_t opset() const { return opset_; }

  static const std::vector<std::string>& supported_ops();

 private:
  std::string input_name_;
  std::vector<std::int64_t> input_shape_;  // -1 for symbolic dims
  std::string output_name_;
  std::int64_t opset_ = 13;
  std::map<std::string, Tensor> initializers_;
  std::vector<Node> nodes_;
};

}  // namespace psyprobe::onnx_runtime
