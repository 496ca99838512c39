#include <doctest.h>

#include <cmath>

#include "onnx.pb.h"
#include "onnx_model.hpp"
#include "psyprobe/error.hpp"
#include "psyprobe/image_io.hpp"
#include "psyprobe/onnx_oracle.hpp"
#include "support.hpp"

using namespace psyprobe;

namespace {

struct TinyNet {
  int c = 3, h = 6, w = 6, filters = 2, classes = 3;
  std::vector<float> conv_w, conv_b, fc_w, fc_b;
};

TinyNet random_net(testing::Gen& gen) {
  TinyNet net;
  auto fill = [&](std::vector<float>& v, std::size_t n) {
    v.resize(n);
    for (float& x : v) x = static_cast<float>(gen.unit() * 2.0 - 1.0);
  };
  fill(net.conv_w, static_cast<std::size_t>(net.filters) * net.c * 9);
  fill(net.conv_b, net.filters);
  fill(net.fc_w, static_cast<std::size_t>(net.classes) * net.filters);
  fill(net.fc_b, net.classes);
  return net;
}

void add_tensor(onnx::GraphProto* g, const std::string& name, std::vector<std::int64_t> dims,
                const std::vector<float>& values) {
  auto* t = g->add_initializer();
  t->set_name(name);
  t->set_data_type(onnx::TensorProto::FLOAT);
  for (auto d : dims) t->add_dims(d);
  for (float v : values) t->add_float_data(v);
}

onnx::NodeProto* add_node(onnx::GraphProto* g, const std::string& op, std::vector<std::string> in,
                          std::string out) {
  auto* n = g->add_node();
  n->set_op_type(op);
  for (auto& s : in) n->add_input(s);
  n->add_output(out);
  return n;
}

void set_ints(onnx::NodeProto* n, const std::string& name, std::vector<std::int64_t> v) {
  auto* a = n->add_attribute();
  a->set_name(name);
  a->set_type(onnx::AttributeProto::INTS);
  for (auto x : v) a->add_ints(x);
}

void set_int(onnx::NodeProto* n, const std::string& name, std::int64_t v) {
  auto* a = n->add_attribute();
  a->set_name(name);
  a->set_type(onnx::AttributeProto::INT);
  a->set_i(v);
}

void add_value(google::protobuf::RepeatedPtrField<onnx::ValueInfoProto>* list, const std::string& name,
               std::vector<std::int64_t> dims) {
  auto* v = list->Add();
  v->set_name(name);
  auto* tt = v->mutable_type()->mutable_tensor_type();
  tt->set_elem_type(onnx::TensorProto::FLOAT);
  for (auto d : dims) {
    auto* dim = tt->mutable_shape()->add_dim();
    if (d < 0) dim->set_dim_param("N");
    else dim->set_dim_value(d);
  }
}

/// Conv(3x3, pad 1) -> Relu -> GlobalAveragePool -> Flatten -> Gemm [-> Softmax].
std::vector<std::uint8_t> build(const TinyNet& net, bool softmax, std::int64_t batch_dim = 1) {
  onnx::ModelProto m;
  m.set_ir_version(7);
  m.add_opset_import()->set_version(13);
  auto* g = m.mutable_graph();
  g->set_name("tiny");
  add_value(g->mutable_input(), "x", {batch_dim, net.c, net.h, net.w});
  add_tensor(g, "cw", {net.filters, net.c, 3, 3}, net.conv_w);
  add_tensor(g, "cb", {net.filters}, net.conv_b);
  add_tensor(g, "fw", {net.classes, net.filters}, net.fc_w);
  add_tensor(g, "fb", {net.classes}, net.fc_b);
  auto* conv = add_node(g, "Conv", {"x", "cw", "cb"}, "c1");
  set_ints(conv, "pads", {1, 1, 1, 1});
  set_ints(conv, "kernel_shape", {3, 3});
  add_node(g, "Relu", {"c1"}, "r1");
  add_node(g, "GlobalAveragePool", {"r1"}, "p1");
  add_node(g, "Flatten", {"p1"}, "f1");
  set_int(add_node(g, "Gemm", {"f1", "fw", "fb"}, "logits"), "transB", 1);
  std::string out = "logits";
  if (softmax) {
    set_int(add_node(g, "Softmax", {"logits"}, "probs"), "axis", 1);
    out = "probs";
  }
  add_value(g->mutable_output(), out, {1, net.classes});
  std::string bytes;
  m.SerializeToString(&bytes);
  return {bytes.begin(), bytes.end()};
}

/// Direct evaluation of the same network in double precision.
std::vector<double> naive_logits(const TinyNet& net, const std::vector<double>& x) {
  std::vector<double> pooled(net.filters, 0.0);
  for (int f = 0; f < net.filters; ++f) {
    for (int y = 0; y < net.h; ++y) {
      for (int xx = 0; xx < net.w; ++xx) {
        double acc = net.conv_b[f];
        for (int c = 0; c < net.c; ++c)
          for (int ky = 0; ky < 3; ++ky)
            for (int kx = 0; kx < 3; ++kx) {
              const int sy = y + ky - 1, sx = xx + kx - 1;
              if (sy < 0 || sx < 0 || sy >= net.h || sx >= net.w) continue;
              acc += net.conv_w[((f * net.c + c) * 3 + ky) * 3 + kx] * x[(c * net.h + sy) * net.w + sx];
            }
        pooled[f] += std::max(0.0, acc);
      }
    }
    pooled[f] /= net.h * net.w;
  }
  std::vector<double> logits(net.classes);
  for (int k = 0; k < net.classes; ++k) {
    logits[k] = net.fc_b[k];
    for (int f = 0; f < net.filters; ++f) logits[k] += net.fc_w[k * net.filters + f] * pooled[f];
  }
  return logits;
}

std::vector<double> softmax(std::vector<double> v) {
  const double top = *std::max_element(v.begin(), v.end());
  double total = 0.0;
  for (double& x : v) total += x = std::exp(x - top);
  for (double& x : v) x /= total;
  return v;
}

ModelManifest manifest() {
  ModelManifest m;
  m.input_w = 6;
  m.input_h = 6;
  m.mean = {0.5, 0.4, 0.3};
  m.std = {0.25, 0.5, 1.0};
  m.labels = {"cat", "dog", "eel"};
  return m;
}

}  // namespace

TEST_CASE("onnx oracle matches a direct evaluation of the network") {
  testing::Gen gen(17);
  for (bool with_softmax : {true, false}) {
    for (int trial = 0; trial < 5; ++trial) {
      const TinyNet net = random_net(gen);
      OnnxOracle oracle(build(net, with_softmax), manifest());
      const Image img = gen.image(6, 6, 3);
      std::vector<double> x(3 * 36);
      const auto m = manifest();
      for (int c = 0; c < 3; ++c)
        for (int y = 0; y < 6; ++y)
          for (int xx = 0; xx < 6; ++xx)
            x[(c * 6 + y) * 6 + xx] = static_cast<float>((img.at(y, xx, c) - m.mean[c]) / m.std[c]);
      const auto want = softmax(naive_logits(net, x));
      const auto got = oracle.classify(img);
      CHECK(std::abs(got.at("cat") - want[0]) < 1e-5);
      CHECK(std::abs(got.at("dog") - want[1]) < 1e-5);
      CHECK(std::abs(got.at("eel") - want[2]) < 1e-5);
      CHECK(got.sum() == doctest::Approx(1.0));
      if (!with_softmax) {
        const auto raw = oracle.raw_output(img);
        CHECK(std::abs(raw[1] - naive_logits(net, x)[1]) < 1e-5);
      }
    }
  }
}

TEST_CASE("onnx oracle loads model and manifest files") {
  testing::Gen gen(5);
  testing::TempDir dir("onnx");
  const TinyNet net = random_net(gen);
  const auto bytes = build(net, true, -1);
  write_file_atomic(dir.path() / "tiny.onnx", std::span<const std::uint8_t>(bytes));
  write_file_atomic(dir.path() / "tiny.json", std::string_view(manifest().to_json()));
  OnnxOracle oracle(dir.path() / "tiny.onnx", dir.path() / "tiny.json", 2);
  CHECK(oracle.id() == "onnx:tiny.onnx");
  CHECK(oracle.input_dims() == InputDims{6, 6, 3});
  oracle.classify(Image(6, 6, 3, 0.5));
  oracle.classify(Image(6, 6, 3, 0.5));
  CHECK_THROWS_AS(oracle.classify(Image(6, 6, 3, 0.5)), BudgetError);
  CHECK_THROWS_AS(OnnxOracle(dir.path() / "missing.onnx", dir.path() / "tiny.json"), InputError);
}

TEST_CASE("manifest dims must agree with the model input") {
  testing::Gen gen(6);
  const TinyNet net = random_net(gen);
  ModelManifest m = manifest();
  m.input_w = 8;
  CHECK_THROWS_AS(OnnxOracle(build(net, true), m), InputError);
  m = manifest();
  m.mean = {0.5};
  m.std = {0.5};
  CHECK_THROWS_AS(OnnxOracle(build(net, true), m), InputError);
  m = manifest();
  m.labels = {"a", "b"};
  OnnxOracle short_labels(build(net, true), m);
  CHECK_THROWS_AS(short_labels.classify(Image(6, 6, 3)), ProtocolError);
  CHECK_THROWS_AS(OnnxOracle(std::vector<std::uint8_t>{0xff, 0x01, 0x02}, manifest()), InputError);
}

TEST_CASE("manifest parsing lists every violation") {
  const auto m = ModelManifest::parse(manifest().to_json());
  CHECK(m.labels == manifest().labels);
  CHECK(m.mean == manifest().mean);
  try {
    ModelManifest::parse(R"({"input_w": "wide", "mean": [0.5]})");
    FAIL("expected a config error");
  } catch (const ConfigError& e) {
    CHECK(e.violations().size() == 4);  // input_w type, input_h, std, labels
  }
  try {
    ModelManifest::parse(R"({"input_w": 0, "input_h": 4, "mean": [0, 0], "std": [0], "labels": []})");
    FAIL("expected a config error");
  } catch (const ConfigError& e) {
    CHECK(e.violations().size() == 5);
  }
  CHECK_THROWS_AS(ModelManifest::parse("{"), ConfigError);
}

TEST_CASE("interpreter rejects unsupported operators") {
  onnx::ModelProto m;
  auto* g = m.mutable_graph();
  add_value(g->mutable_input(), "x", {1, 1, 2, 2});
  add_node(g, "Einsum", {"x"}, "y");
  add_value(g->mutable_output(), "y", {1});
  std::string bytes;
  m.SerializeToString(&bytes);
  CHECK_THROWS_AS(onnx_runtime::Model::parse(std::span(reinterpret_cast<const std::uint8_t*>(bytes.data()),
                                                       bytes.size())),
                  InputError);
}
