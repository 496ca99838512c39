#include "onnx_model.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fmt/format.h>
#include <functional>
#include <limits>
#include <numeric>
#include <set>

#include "onnx.pb.h"
#include "psyprobe/error.hpp"
#include "psyprobe/image_io.hpp"

namespace psyprobe::onnx_runtime {
namespace {

using Shape = std::vector<std::int64_t>;

std::int64_t product(std::span<const std::int64_t> dims) {
  return std::accumulate(dims.begin(), dims.end(), std::int64_t{1}, std::multiplies<>());
}

template <typename T>
std::vector<T> raw_as(const std::string& raw) {
  std::vector<T> out(raw.size() / sizeof(T));
  std::memcpy(out.data(), raw.data(), out.size() * sizeof(T));
  return out;
}

Tensor from_proto(const onnx::TensorProto& proto) {
  Shape shape(proto.dims().begin(), proto.dims().end());
  const auto n = static_cast<std::size_t>(product(shape));
  const bool raw = proto.has_raw_data();
  Tensor t;
  t.shape = shape;
  switch (proto.data_type()) {
    case onnx::TensorProto::FLOAT:
      t.values = raw ? raw_as<float>(proto.raw_data())
                     : std::vector<float>(proto.float_data().begin(), proto.float_data().end());
      break;
    case onnx::TensorProto::DOUBLE: {
      const auto d = raw ? raw_as<double>(proto.raw_data())
                         : std::vector<double>(proto.double_data().begin(), proto.double_data().end());
      t.values.assign(d.begin(), d.end());
      break;
    }
    case onnx::TensorProto::INT64:
      t.integer = true;
      t.ints = raw ? raw_as<std::int64_t>(proto.raw_data())
                   : std::vector<std::int64_t>(proto.int64_data().begin(), proto.int64_data().end());
      break;
    case onnx::TensorProto::INT32: {
      t.integer = true;
      const auto d = raw ? raw_as<std::int32_t>(proto.raw_data())
                         : std::vector<std::int32_t>(proto.int32_data().begin(), proto.int32_data().end());
      t.ints.assign(d.begin(), d.end());
      break;
    }
    default:
      throw InputError(fmt::format("tensor '{}' has unsupported data type {}", proto.name(),
                                   proto.data_type()));
  }
  if ((t.integer ? t.ints.size() : t.values.size()) != n) {
    throw InputError(fmt::format("tensor '{}' holds the wrong number of elements", proto.name()));
  }
  return t;
}

Shape broadcast_shape(const Shape& a, const Shape& b) {
  const std::size_t rank = std::max(a.size(), b.size());
  Shape out(rank);
  for (std::size_t i = 0; i < rank; ++i) {
    const std::int64_t da = i < rank - a.size() ? 1 : a[i - (rank - a.size())];
    const std::int64_t db = i < rank - b.size() ? 1 : b[i - (rank - b.size())];
    if (da != db && da != 1 && db != 1) throw InputError("operands cannot be broadcast together");
    out[i] = std::max(da, db);
  }
  return out;
}

/// Strides of `shape` viewed inside the broadcast `target` (0 on stretched dims).
Shape broadcast_strides(const Shape& shape, const Shape& target) {
  Shape strides(target.size(), 0);
  std::int64_t stride = 1;
  for (std::size_t i = shape.size(); i-- > 0;) {
    const std::size_t j = i + (target.size() - shape.size());
    strides[j] = shape[i] == 1 ? 0 : stride;
    stride *= shape[i];
  }
  return strides;
}

Tensor elementwise(const Tensor& a, const Tensor& b, const std::function<float(float, float)>& op) {
  if (a.integer || b.integer) throw InputError("elementwise ops support float tensors only");
  const Shape out_shape = broadcast_shape(a.shape, b.shape);
  const Shape sa = broadcast_strides(a.shape, out_shape);
  const Shape sb = broadcast_strides(b.shape, out_shape);
  const auto n = static_cast<std::size_t>(product(out_shape));
  std::vector<float> out(n);
  Shape idx(out_shape.size(), 0);
  for (std::size_t k = 0; k < n; ++k) {
    std::int64_t ia = 0;
    std::int64_t ib = 0;
    for (std::size_t d = 0; d < idx.size(); ++d) {
      ia += idx[d] * sa[d];
      ib += idx[d] * sb[d];
    }
    out[k] = op(a.values[ia], b.values[ib]);
    for (std::size_t d = idx.size(); d-- > 0;) {
      if (++idx[d] < out_shape[d]) break;
      idx[d] = 0;
    }
  }
  return Tensor::floats(out_shape, std::move(out));
}

Tensor unary(const Tensor& x, const std::function<float(float)>& op) {
  Tensor out = x;
  for (float& v : out.values) v = op(v);
  return out;
}

struct Window2d {
  std::int64_t kh, kw, sh, sw, dh, dw, pt, pl, pb, pr;
};

Window2d window_params(const Node& node, std::int64_t kh, std::int64_t kw, std::int64_t in_h,
                       std::int64_t in_w) {
  const auto strides = node.attr_ints("strides", {1, 1});
  const auto dilations = node.attr_ints("dilations", {1, 1});
  auto pads = node.attr_ints("pads", {0, 0, 0, 0});
  const std::string auto_pad = node.attr_string("auto_pad", "NOTSET");
  Window2d w{kh, kw, strides[0], strides[1], dilations[0], dilations[1], pads[0], pads[1], pads[2], pads[3]};
  if (auto_pad == "SAME_UPPER" || auto_pad == "SAME_LOWER") {
    auto same = [&](std::int64_t in, std::int64_t k, std::int64_t s, std::int64_t d) {
      const std::int64_t out = (in + s - 1) / s;
      return std::max<std::int64_t>(0, (out - 1) * s + (k - 1) * d + 1 - in);
    };
    const std::int64_t ph = same(in_h, kh, w.sh, w.dh);
    const std::int64_t pw = same(in_w, kw, w.sw, w.dw);
    const bool upper = auto_pad == "SAME_UPPER";
    w.pt = upper ? ph / 2 : ph - ph / 2;
    w.pb = ph - w.pt;
    w.pl = upper ? pw / 2 : pw - pw / 2;
    w.pr = pw - w.pl;
  } else if (auto_pad == "VALID") {
    w.pt = w.pl = w.pb = w.pr = 0;
  } else if (auto_pad != "NOTSET") {
    throw InputError(fmt::format("unsupported auto_pad '{}'", auto_pad));
  }
  return w;
}

std::int64_t out_extent(std::int64_t in, std::int64_t k, std::int64_t s, std::int64_t d,
                        std::int64_t p0, std::int64_t p1, bool ceil_mode = false) {
  const std::int64_t span = in + p0 + p1 - d * (k - 1) - 1;
  if (span < 0) throw InputError("kernel larger than padded input");
  return (ceil_mode ? (span + s - 1) / s : span / s) + 1;
}

Tensor conv(const Node& node, const Tensor& x, const Tensor& weight, const Tensor* bias) {
  if (x.shape.size() != 4 || weight.shape.size() != 4) throw InputError("Conv supports 2-D inputs only");
  const std::int64_t n = x.shape[0], c = x.shape[1], h = x.shape[2], w = x.shape[3];
  const std::int64_t m = weight.shape[0], cg = weight.shape[1];
  const std::int64_t group = node.attr_int("group", 1);
  if (cg * group != c || m % group != 0) throw InputError("Conv channel/group mismatch");
  const Window2d p = window_params(node, weight.shape[2], weight.shape[3], h, w);
  const std::int64_t oh = out_extent(h, p.kh, p.sh, p.dh, p.pt, p.pb);
  const std::int64_t ow = out_extent(w, p.kw, p.sw, p.dw, p.pl, p.pr);
  const std::int64_t mg = m / group;
  std::vector<float> out(static_cast<std::size_t>(n * m * oh * ow), 0.0f);
  for (std::int64_t b = 0; b < n; ++b) {
    for (std::int64_t oc = 0; oc < m; ++oc) {
      const std::int64_t g = oc / mg;
      for (std::int64_t oy = 0; oy < oh; ++oy) {
        for (std::int64_t ox = 0; ox < ow; ++ox) {
          double acc = bias ? bias->values[oc] : 0.0;
          for (std::int64_t ic = 0; ic < cg; ++ic) {
            const std::int64_t in_c = g * cg + ic;
            for (std::int64_t ky = 0; ky < p.kh; ++ky) {
              const std::int64_t iy = oy * p.sh - p.pt + ky * p.dh;
              if (iy < 0 || iy >= h) continue;
              for (std::int64_t kx = 0; kx < p.kw; ++kx) {
                const std::int64_t ix = ox * p.sw - p.pl + kx * p.dw;
                if (ix < 0 || ix >= w) continue;
                acc += static_cast<double>(x.values[((b * c + in_c) * h + iy) * w + ix]) *
                       weight.values[((oc * cg + ic) * p.kh + ky) * p.kw + kx];
              }
            }
          }
          out[((b * m + oc) * oh + oy) * ow + ox] = static_cast<float>(acc);
        }
      }
    }
  }
  return Tensor::floats({n, m, oh, ow}, std::move(out));
}

Tensor pool(const Node& node, const Tensor& x, bool max_pool) {
  if (x.shape.size() != 4) throw InputError("pooling supports 2-D inputs only");
  const auto kernel = node.attr_ints("kernel_shape");
  if (kernel.size() != 2) throw InputError("pooling needs a 2-D kernel_shape");
  const std::int64_t n = x.shape[0], c = x.shape[1], h = x.shape[2], w = x.shape[3];
  const Window2d p = window_params(node, kernel[0], kernel[1], h, w);
  const bool ceil_mode = node.attr_int("ceil_mode", 0) != 0;
  const bool include_pad = node.attr_int("count_include_pad", 0) != 0;
  const std::int64_t oh = out_extent(h, p.kh, p.sh, p.dh, p.pt, p.pb, ceil_mode);
  const std::int64_t ow = out_extent(w, p.kw, p.sw, p.dw, p.pl, p.pr, ceil_mode);
  std::vector<float> out(static_cast<std::size_t>(n * c * oh * ow));
  for (std::int64_t plane = 0; plane < n * c; ++plane) {
    for (std::int64_t oy = 0; oy < oh; ++oy) {
      for (std::int64_t ox = 0; ox < ow; ++ox) {
        double acc = max_pool ? -std::numeric_limits<double>::infinity() : 0.0;
        std::int64_t count = 0;
        for (std::int64_t ky = 0; ky < p.kh; ++ky) {
          const std::int64_t iy = oy * p.sh - p.pt + ky * p.dh;
          for (std::int64_t kx = 0; kx < p.kw; ++kx) {
            const std::int64_t ix = ox * p.sw - p.pl + kx * p.dw;
            const bool inside = iy >= 0 && iy < h && ix >= 0 && ix < w;
            if (!inside) {
              // Padding positions beyond the padded extent never count.
              if (include_pad && iy < h + p.pb && ix < w + p.pr) ++count;
              continue;
            }
            const double v = x.values[(plane * h + iy) * w + ix];
            acc = max_pool ? std::max(acc, v) : acc + v;
            ++count;
          }
        }
        out[(plane * oh + oy) * ow + ox] =
            static_cast<float>(max_pool ? acc : (count > 0 ? acc / count : 0.0));
      }
    }
  }
  return Tensor::floats({n, c, oh, ow}, std::move(out));
}

Tensor global_average_pool(const Tensor& x) {
  if (x.shape.size() < 3) throw InputError("GlobalAveragePool needs spatial dims");
  const std::int64_t n = x.shape[0], c = x.shape[1];
  const std::int64_t spatial = product(std::span(x.shape).subspan(2));
  std::vector<float> out(static_cast<std::size_t>(n * c));
  for (std::int64_t plane = 0; plane < n * c; ++plane) {
    double acc = 0.0;
    for (std::int64_t k = 0; k < spatial; ++k) acc += x.values[plane * spatial + k];
    out[plane] = static_cast<float>(acc / spatial);
  }
  Shape shape{n, c};
  shape.resize(x.shape.size(), 1);
  return Tensor::floats(shape, std::move(out));
}

Tensor gemm(const Node& node, const Tensor& a, const Tensor& b, const Tensor* c) {
  if (a.shape.size() != 2 || b.shape.size() != 2) throw InputError("Gemm needs 2-D operands");
  const bool ta = node.attr_int("transA", 0) != 0;
  const bool tb = node.attr_int("transB", 0) != 0;
  const double alpha = node.attr_float("alpha", 1.0f);
  const double beta = node.attr_float("beta", 1.0f);
  const std::int64_t m = ta ? a.shape[1] : a.shape[0];
  const std::int64_t k = ta ? a.shape[0] : a.shape[1];
  const std::int64_t kb = tb ? b.shape[1] : b.shape[0];
  const std::int64_t n = tb ? b.shape[0] : b.shape[1];
  if (k != kb) throw InputError("Gemm inner dimensions differ");
  std::vector<float> out(static_cast<std::size_t>(m * n));
  for (std::int64_t i = 0; i < m; ++i) {
    for (std::int64_t j = 0; j < n; ++j) {
      double acc = 0.0;
      for (std::int64_t q = 0; q < k; ++q) {
        const double av = ta ? a.values[q * m + i] : a.values[i * k + q];
        const double bv = tb ? b.values[j * k + q] : b.values[q * n + j];
        acc += av * bv;
      }
      out[i * n + j] = static_cast<float>(alpha * acc);
    }
  }
  Tensor result = Tensor::floats({m, n}, std::move(out));
  if (c && beta != 0.0) {
    Tensor scaled = unary(*c, [beta](float v) { return static_cast<float>(beta * v); });
    result = elementwise(result, scaled, std::plus<float>());
  }
  return result;
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  Shape as = a.shape;
  if (as.size() == 1) as.insert(as.begin(), 1);
  if (as.size() != 2 || b.shape.size() != 2) throw InputError("MatMul supports 1-D/2-D operands only");
  const std::int64_t m = as[0], k = as[1], n = b.shape[1];
  if (b.shape[0] != k) throw InputError("MatMul inner dimensions differ");
  std::vector<float> out(static_cast<std::size_t>(m * n));
  for (std::int64_t i = 0; i < m; ++i) {
    for (std::int64_t j = 0; j < n; ++j) {
      double acc = 0.0;
      for (std::int64_t q = 0; q < k; ++q) acc += static_cast<double>(a.values[i * k + q]) * b.values[q * n + j];
      out[i * n + j] = static_cast<float>(acc);
    }
  }
  return Tensor::floats(a.shape.size() == 1 ? Shape{n} : Shape{m, n}, std::move(out));
}

std::int64_t normalize_axis(std::int64_t axis, std::size_t rank) {
  const auto r = static_cast<std::int64_t>(rank);
  if (axis < 0) axis += r;
  if (axis < 0 || axis > r) throw InputError("axis out of range");
  return axis;
}

Tensor softmax(const Tensor& x, std::int64_t axis, bool legacy) {
  axis = normalize_axis(axis, x.shape.size());
  // Legacy opsets coerce to 2-D at `axis`; newer ones normalize one axis.
  const std::int64_t outer = product(std::span(x.shape).first(static_cast<std::size_t>(axis)));
  const std::int64_t axis_len = legacy ? product(std::span(x.shape).subspan(static_cast<std::size_t>(axis)))
                                       : x.shape[static_cast<std::size_t>(axis)];
  const std::int64_t inner = legacy ? 1 : product(std::span(x.shape).subspan(static_cast<std::size_t>(axis) + 1));
  Tensor out = x;
  for (std::int64_t o = 0; o < outer; ++o) {
    for (std::int64_t in = 0; in < inner; ++in) {
      auto at = [&](std::int64_t j) -> float& { return out.values[(o * axis_len + j) * inner + in]; };
      double top = -std::numeric_limits<double>::infinity();
      for (std::int64_t j = 0; j < axis_len; ++j) top = std::max<double>(top, at(j));
      double total = 0.0;
      std::vector<double> e(static_cast<std::size_t>(axis_len));
      for (std::int64_t j = 0; j < axis_len; ++j) total += e[j] = std::exp(at(j) - top);
      for (std::int64_t j = 0; j < axis_len; ++j) at(j) = static_cast<float>(e[j] / total);
    }
  }
  return out;
}

Tensor batch_norm(const Node& node, const Tensor& x, const Tensor& scale, const Tensor& bias,
                  const Tensor& mean, const Tensor& var) {
  const double eps = node.attr_float("epsilon", 1e-5f);
  const std::int64_t n = x.shape[0], c = x.shape[1];
  const std::int64_t spatial = product(std::span(x.shape).subspan(2));
  Tensor out = x;
  for (std::int64_t b = 0; b < n; ++b) {
    for (std::int64_t ch = 0; ch < c; ++ch) {
      const double k = scale.values[ch] / std::sqrt(var.values[ch] + eps);
      for (std::int64_t s = 0; s < spatial; ++s) {
        float& v = out.values[(b * c + ch) * spatial + s];
        v = static_cast<float>((v - mean.values[ch]) * k + bias.values[ch]);
      }
    }
  }
  return out;
}

Tensor reshape(const Tensor& x, const Tensor& shape_tensor) {
  if (!shape_tensor.integer) throw InputError("Reshape shape must be int64");
  Shape shape = shape_tensor.ints;
  std::int64_t known = 1;
  std::int64_t infer = -1;
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (shape[i] == 0) shape[i] = x.shape.at(i);
    if (shape[i] == -1) {
      infer = static_cast<std::int64_t>(i);
    } else {
      known *= shape[i];
    }
  }
  const auto total = static_cast<std::int64_t>(x.numel());
  if (infer >= 0) shape[static_cast<std::size_t>(infer)] = total / known;
  if (product(shape) != total) throw InputError("Reshape changes the element count");
  Tensor out = x;
  out.shape = shape;
  return out;
}

Tensor flatten(const Tensor& x, std::int64_t axis) {
  axis = normalize_axis(axis, x.shape.size());
  Tensor out = x;
  out.shape = {product(std::span(x.shape).first(static_cast<std::size_t>(axis))),
               product(std::span(x.shape).subspan(static_cast<std::size_t>(axis)))};
  return out;
}

Tensor unsqueeze(const Tensor& x, Shape axes) {
  Shape shape = x.shape;
  const std::size_t rank = shape.size() + axes.size();
  for (auto& a : axes) a = normalize_axis(a, rank);
  std::sort(axes.begin(), axes.end());
  for (auto a : axes) shape.insert(shape.begin() + a, 1);
  Tensor out = x;
  out.shape = shape;
  return out;
}

Tensor concat(std::span<const Tensor* const> parts, std::int64_t axis) {
  if (parts.empty()) throw InputError("Concat without inputs");
  const Tensor& first = *parts[0];
  axis = normalize_axis(axis, first.shape.size());
  Shape shape = first.shape;
  shape[static_cast<std::size_t>(axis)] = 0;
  for (const Tensor* p : parts) shape[static_cast<std::size_t>(axis)] += p->shape[static_cast<std::size_t>(axis)];
  const std::int64_t outer = product(std::span(shape).first(static_cast<std::size_t>(axis)));
  Tensor out;
  out.shape = shape;
  out.integer = first.integer;
  for (std::int64_t o = 0; o < outer; ++o) {
    for (const Tensor* p : parts) {
      const std::int64_t chunk = product(std::span(p->shape).subspan(static_cast<std::size_t>(axis)));
      if (out.integer) {
        out.ints.insert(out.ints.end(), p->ints.begin() + o * chunk, p->ints.begin() + (o + 1) * chunk);
      } else {
        out.values.insert(out.values.end(), p->values.begin() + o * chunk,
                          p->values.begin() + (o + 1) * chunk);
      }
    }
  }
  return out;
}

Tensor gather(const Tensor& data, const Tensor& indices, std::int64_t axis) {
  if (normalize_axis(axis, data.shape.size()) != 0 || data.shape.size() != 1) {
    throw InputError("Gather supports axis 0 of 1-D tensors only");
  }
  Tensor out;
  out.integer = data.integer;
  out.shape = indices.shape;
  for (std::int64_t idx : indices.ints) {
    if (idx < 0) idx += data.shape[0];
    if (data.integer) {
      out.ints.push_back(data.ints.at(static_cast<std::size_t>(idx)));
    } else {
      out.values.push_back(data.values.at(static_cast<std::size_t>(idx)));
    }
  }
  return out;
}

}  // namespace

std::size_t Tensor::numel() const { return integer ? ints.size() : values.size(); }

Tensor Tensor::floats(std::vector<std::int64_t> shape, std::vector<float> values) {
  Tensor t;
  t.shape = std::move(shape);
  t.values = std::move(values);
  return t;
}

Tensor Tensor::int64s(std::vector<std::int64_t> shape, std::vector<std::int64_t> ints) {
  Tensor t;
  t.shape = std::move(shape);
  t.ints = std::move(ints);
  t.integer = true;
  return t;
}

std::int64_t Node::attr_int(const std::string& key, std::int64_t fallback) const {
  const auto it = attributes.find(key);
  return it == attributes.end() ? fallback : it->second.i;
}

float Node::attr_float(const std::string& key, float fallback) const {
  const auto it = attributes.find(key);
  return it == attributes.end() ? fallback : it->second.f;
}

std::vector<std::int64_t> Node::attr_ints(const std::string& key, std::vector<std::int64_t> fallback) const {
  const auto it = attributes.find(key);
  return it == attributes.end() ? fallback : it->second.ints;
}

std::string Node::attr_string(const std::string& key, std::string fallback) const {
  const auto it = attributes.find(key);
  return it == attributes.end() ? fallback : it->second.s;
}

const std::vector<std::string>& Model::supported_ops() {
  static const std::vector<std::string> ops = {
      "Add", "AveragePool", "BatchNormalization", "Concat", "Constant", "Conv", "Div",
      "Dropout", "Flatten", "Gather", "Gemm", "GlobalAveragePool", "Identity", "LeakyRelu",
      "MatMul", "MaxPool", "Mul", "Relu", "Reshape", "Shape", "Sigmoid", "Softmax", "Sub",
      "Tanh", "Unsqueeze"};
  return ops;
}

Model Model::parse(std::span<const std::uint8_t> bytes) {
  onnx::ModelProto proto;
  if (!proto.ParseFromArray(bytes.data(), static_cast<int>(bytes.size()))) {
    throw InputError("cannot parse ONNX model");
  }
  Model model;
  for (const auto& op : proto.opset_import()) {
    if (op.domain().empty() || op.domain() == "ai.onnx") model.opset_ = op.version();
  }
  const auto& graph = proto.graph();
  for (const auto& init : graph.initializer()) model.initializers_[init.name()] = from_proto(init);

  for (const auto& in : graph.input()) {
    if (model.initializers_.contains(in.name())) continue;
    if (!model.input_name_.empty()) throw InputError("ONNX model must have exactly one data input");
    model.input_name_ = in.name();
    for (const auto& dim : in.type().tensor_type().shape().dim()) {
      model.input_shape_.push_back(dim.has_dim_value() ? dim.dim_value() : -1);
    }
  }
  if (model.input_name_.empty()) throw InputError("ONNX model has no data input");
  if (graph.output_size() < 1) throw InputError("ONNX model has no output");
  model.output_name_ = graph.output(0).name();

  const std::set<std::string> supported(supported_ops().begin(), supported_ops().end());
  for (const auto& n : graph.node()) {
    if (!n.domain().empty() && n.domain() != "ai.onnx") {
      throw InputError(fmt::format("operator domain '{}' is not supported", n.domain()));
    }
    if (!supported.contains(n.op_type())) {
      throw InputError(fmt::format("ONNX operator '{}' is not supported", n.op_type()));
    }
    Node node;
    node.op = n.op_type();
    node.name = n.name();
    node.inputs.assign(n.input().begin(), n.input().end());
    node.outputs.assign(n.output().begin(), n.output().end());
    for (const auto& a : n.attribute()) {
      Attribute attr;
      attr.i = a.i();
      attr.f = a.f();
      attr.s = a.s();
      attr.ints.assign(a.ints().begin(), a.ints().end());
      attr.floats.assign(a.floats().begin(), a.floats().end());
      if (a.has_t()) attr.t = from_proto(a.t());
      node.attributes[a.name()] = std::move(attr);
    }
    model.nodes_.push_back(std::move(node));
  }
  return model;
}

Model Model::load(const std::filesystem::path& path) { return parse(read_file_bytes(path)); }

Tensor Model::run(const Tensor& input) const {
  std::map<std::string, Tensor> values;
  values[input_name_] = input;
  auto get = [&](const std::string& name) -> const Tensor& {
    if (const auto it = values.find(name); it != values.end()) return it->second;
    if (const auto it = initializers_.find(name); it != initializers_.end()) return it->second;
    throw InputError(fmt::format("ONNX value '{}' is undefined", name));
  };
  auto optional_input = [&](const Node& node, std::size_t i) -> const Tensor* {
    return i < node.inputs.size() && !node.inputs[i].empty() ? &get(node.inputs[i]) : nullptr;
  };

  for (const Node& node : nodes_) {
    const std::string& op = node.op;
    Tensor out;
    if (op == "Conv") {
      out = conv(node, get(node.inputs[0]), get(node.inputs[1]), optional_input(node, 2));
    } else if (op == "MaxPool" || op == "AveragePool") {
      out = pool(node, get(node.inputs[0]), op == "MaxPool");
    } else if (op == "GlobalAveragePool") {
      out = global_average_pool(get(node.inputs[0]));
    } else if (op == "Relu") {
      out = unary(get(node.inputs[0]), [](float v) { return std::max(v, 0.0f); });
    } else if (op == "LeakyRelu") {
      const float alpha = node.attr_float("alpha", 0.01f);
      out = unary(get(node.inputs[0]), [alpha](float v) { return v < 0 ? alpha * v : v; });
    } else if (op == "Sigmoid") {
      out = unary(get(node.inputs[0]), [](float v) { return 1.0f / (1.0f + std::exp(-v)); });
    } else if (op == "Tanh") {
      out = unary(get(node.inputs[0]), [](float v) { return std::tanh(v); });
    } else if (op == "Add") {
      out = elementwise(get(node.inputs[0]), get(node.inputs[1]), std::plus<float>());
    } else if (op == "Sub") {
      out = elementwise(get(node.inputs[0]), get(node.inputs[1]), std::minus<float>());
    } else if (op == "Mul") {
      out = elementwise(get(node.inputs[0]), get(node.inputs[1]), std::multiplies<float>());
    } else if (op == "Div") {
      out = elementwise(get(node.inputs[0]), get(node.inputs[1]), std::divides<float>());
    } else if (op == "Gemm") {
      out = gemm(node, get(node.inputs[0]), get(node.inputs[1]), optional_input(node, 2));
    } else if (op == "MatMul") {
      out = matmul(get(node.inputs[0]), get(node.inputs[1]));
    } else if (op == "Flatten") {
      out = flatten(get(node.inputs[0]), node.attr_int("axis", 1));
    } else if (op == "Reshape") {
      out = reshape(get(node.inputs[0]), get(node.inputs[1]));
    } else if (op == "Softmax") {
      const bool legacy = opset_ < 13;
      out = softmax(get(node.inputs[0]), node.attr_int("axis", legacy ? 1 : -1), legacy);
    } else if (op == "BatchNormalization") {
      out = batch_norm(node, get(node.inputs[0]), get(node.inputs[1]), get(node.inputs[2]),
                       get(node.inputs[3]), get(node.inputs[4]));
    } else if (op == "Dropout" || op == "Identity") {
      out = get(node.inputs[0]);
    } else if (op == "Constant") {
      const auto it = node.attributes.find("value");
      if (it == node.attributes.end()) throw InputError("Constant without a tensor value");
      out = it->second.t;
    } else if (op == "Shape") {
      const Tensor& x = get(node.inputs[0]);
      out = Tensor::int64s({static_cast<std::int64_t>(x.shape.size())}, x.shape);
    } else if (op == "Gather") {
      out = gather(get(node.inputs[0]), get(node.inputs[1]), node.attr_int("axis", 0));
    } else if (op == "Unsqueeze") {
      const Tensor* axes = optional_input(node, 1);
      out = unsqueeze(get(node.inputs[0]), axes ? axes->ints : node.attr_ints("axes"));
    } else if (op == "Concat") {
      std::vector<const Tensor*> parts;
      for (const auto& name : node.inputs) parts.push_back(&get(name));
      out = concat(parts, node.attr_int("axis", 0));
    }
    values[node.outputs.at(0)] = std::move(out);
  }
  return get(output_name_);
}

}  // namespace psyprobe::onnx_runtime
