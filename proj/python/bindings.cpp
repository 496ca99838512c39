#include <pybind11/functional.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <nlohmann/json.hpp>

#include "psyprobe/campaign.hpp"
#include "psyprobe/deepception.hpp"
#include "psyprobe/error.hpp"
#include "psyprobe/image.hpp"
#include "psyprobe/image_io.hpp"
#include "psyprobe/onnx_oracle.hpp"
#include "psyprobe/probing.hpp"
#include "psyprobe/remote_oracle.hpp"
#include "psyprobe/synthetic_oracle.hpp"

namespace py = pybind11;
using namespace psyprobe;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

/// (H, W) or (H, W, C) float array in [0, 1].
Image to_image(const Array& a) {
  if (a.ndim() != 2 && a.ndim() != 3) throw DimensionError("image arrays must be HxW or HxWxC");
  const int h = static_cast<int>(a.shape(0));
  const int w = static_cast<int>(a.shape(1));
  const int c = a.ndim() == 3 ? static_cast<int>(a.shape(2)) : 1;
  return Image(h, w, c, std::vector<double>(a.data(), a.data() + a.size()));
}

Array to_array(const Image& img) {
  Array out({img.height(), img.width(), img.channels()});
  std::copy(img.data().begin(), img.data().end(), out.mutable_data());
  return out;
}

py::tuple rect_tuple(const Rect& r) { return py::make_tuple(r.x, r.y, r.w, r.h); }

Rect to_rect(const py::tuple& t) {
  if (t.size() != 4) throw ParameterError("rects are (x, y, w, h) tuples");
  return {t[0].cast<int>(), t[1].cast<int>(), t[2].cast<int>(), t[3].cast<int>()};
}

/// Oracle backed by a Python callable image -> {class: probability}.
class CallableOracle final : public Oracle {
 public:
  CallableOracle(py::function fn, InputDims dims, std::string id, std::uint64_t max_queries)
      : Oracle(max_queries), fn_(std::move(fn)), dims_(dims), id_(std::move(id)) {}
  ~CallableOracle() override {
    py::gil_scoped_acquire gil;
    fn_ = py::function();
  }

  InputDims input_dims() const override { return dims_; }
  std::string id() const override { return id_; }

 protected:
  ClassProbabilities query(const Image& img) const override {
    py::gil_scoped_acquire gil;
    const auto result = fn_(to_array(img)).cast<std::map<std::string, double>>();
    return ClassProbabilities(result);
  }

 private:
  py::function fn_;
  InputDims dims_;
  std::string id_;
};

std::vector<SourceImage> to_sources(const std::vector<std::pair<std::string, Array>>& items) {
  std::vector<SourceImage> out;
  out.reserve(items.size());
  for (const auto& [id, a] : items) out.push_back({id, to_image(a)});
  return out;
}

std::vector<Image> to_images(const std::vector<Array>& items) {
  std::vector<Image> out;
  for (const auto& a : items) out.push_back(to_image(a));
  return out;
}

py::dict run_outcome(const RunOutcome& r) {
  py::dict d;
  d["code"] = static_cast<int>(r.code);
  d["message"] = r.message;
  d["output_dir"] = r.output_dir;
  d["outputs"] = r.outputs;
  d["query_count"] = r.query_count;
  return d;
}

}  // namespace

PYBIND11_MODULE(_psyprobe, m) {
  m.doc() = "Black-box probing and decoy attacks on image classifiers";

  auto base = py::register_exception<Error>(m, "Error");
  py::register_exception<DimensionError>(m, "DimensionError", base.ptr());
  py::register_exception<BoundsError>(m, "BoundsError", base.ptr());
  py::register_exception<TilingError>(m, "TilingError", base.ptr());
  py::register_exception<ParameterError>(m, "ParameterError", base.ptr());
  py::register_exception<EmptyError>(m, "EmptyError", base.ptr());
  py::register_exception<InputError>(m, "InputError", base.ptr());
  py::register_exception<ClassError>(m, "ClassError", base.ptr());
  py::register_exception<BudgetError>(m, "BudgetError", base.ptr());
  py::register_exception<TransportError>(m, "TransportError", base.ptr());
  py::register_exception<ProtocolError>(m, "ProtocolError", base.ptr());
  py::register_exception<ConfigError>(m, "ConfigError", base.ptr());

  // Images.
  m.def("crop", [](const Array& img, const py::tuple& r) { return to_array(crop(to_image(img), to_rect(r))); });
  m.def("resize", [](const Array& img, int w, int h) { return to_array(resize(to_image(img), w, h)); },
        py::arg("img"), py::arg("width"), py::arg("height"));
  m.def("insert_patch", [](const Array& canvas, const Array& patch, const py::tuple& pos) {
    return to_array(insert_patch(to_image(canvas), to_image(patch), to_rect(pos)));
  });
  m.def("black_canvas", [](int w, int h, int c) { return to_array(make_black_canvas(w, h, c)); },
        py::arg("width"), py::arg("height"), py::arg("channels") = 3);
  m.def("normalize_patch", [](const Array& p) { return to_array(normalize_patch(to_image(p))); });
  m.def("weakest_channel", [](const Array& img, const py::tuple& r) { return weakest_channel(to_image(img), to_rect(r)); });
  m.def("gaussian_noise_image", [](int w, int h, double std_255, std::uint64_t seed) {
    return to_array(gaussian_noise_image(w, h, std_255, seed));
  });
  m.def("read_png", [](const std::filesystem::path& p) { return to_array(read_png(p)); });
  m.def("write_png", [](const std::filesystem::path& p, const Array& img) { write_png(p, to_image(img)); });

  py::class_<Decoy>(m, "Decoy")
      .def_property_readonly("pixels", [](const Decoy& d) { return to_array(d.pixels); })
      .def_readonly("tau", &Decoy::tau)
      .def_readonly("source_patch_id", &Decoy::source_patch_id)
      .def_readonly("std", &Decoy::std);
  m.def("make_decoy", [](const Array& patch, double tau, std::string id) { return make_decoy(to_image(patch), tau, id); },
        py::arg("patch"), py::arg("tau"), py::arg("source_patch_id") = "");
  m.def("make_noise_decoy", [](const Array& noise, double tau) { return make_noise_decoy(to_image(noise), tau); });
  m.def("apply_decoy", [](const Array& target, const Decoy& d, const py::tuple& cell) {
    return to_array(apply_decoy(to_image(target), d, to_rect(cell)));
  });

  // Oracles.
  py::class_<Oracle>(m, "Oracle")
      .def("classify", [](Oracle& o, const Array& img) {
        const Image image = to_image(img);
        py::gil_scoped_release release;
        return o.classify(image).entries();
      })
      .def_property_readonly("id", &Oracle::id)
      .def_property_readonly("input_dims", [](const Oracle& o) {
        const auto d = o.input_dims();
        return py::make_tuple(d.width, d.height, d.channels);
      })
      .def_property_readonly("queries", [](const Oracle& o) { return o.budget().consumed(); })
      .def_property_readonly("max_queries", [](const Oracle& o) { return o.budget().max_queries(); });

  py::class_<SyntheticOracle, Oracle>(m, "SyntheticOracle")
      .def_static("random", [](int w, int h, int c, int classes, std::uint64_t seed, double mass, double temperature,
                               std::uint64_t max_queries) {
        return std::make_unique<SyntheticOracle>(random_synthetic_spec({w, h, c}, classes, seed, mass, temperature),
                                                 max_queries);
      }, py::arg("width") = 64, py::arg("height") = 64, py::arg("channels") = 3, py::arg("classes") = 4,
         py::arg("seed") = 0, py::arg("mass") = 40.0, py::arg("temperature") = 1.0,
         py::arg("max_queries") = OracleBudget::kUnlimited)
      .def_static("uniform", [](int w, int h, int c, int classes, double weight, double temperature,
                                std::uint64_t max_queries) {
        return std::make_unique<SyntheticOracle>(uniform_synthetic_spec({w, h, c}, classes, weight, temperature),
                                                 max_queries);
      }, py::arg("width") = 64, py::arg("height") = 64, py::arg("channels") = 3, py::arg("classes") = 4,
         py::arg("weight") = 1.0, py::arg("temperature") = 1.0, py::arg("max_queries") = OracleBudget::kUnlimited);

  py::class_<OnnxOracle, Oracle>(m, "OnnxOracle")
      .def(py::init<const std::filesystem::path&, const std::filesystem::path&, std::uint64_t>(), py::arg("model"),
           py::arg("manifest"), py::arg("max_queries") = OracleBudget::kUnlimited)
      .def("raw_output", [](const OnnxOracle& o, const Array& img) { return o.raw_output(to_image(img)); })
      .def_property_readonly("labels", [](const OnnxOracle& o) { return o.manifest().labels; });

  py::class_<RemoteOracle, Oracle>(m, "RemoteOracle")
      .def(py::init([](std::string endpoint, int w, int h, int c, int attempts, int backoff_ms, int timeout_s,
                       std::uint64_t max_queries) {
             RemoteOptions opt;
             opt.attempts = attempts;
             opt.backoff = std::chrono::milliseconds(backoff_ms);
             opt.timeout = std::chrono::seconds(timeout_s);
             return std::make_unique<RemoteOracle>(std::move(endpoint), InputDims{w, h, c}, opt, max_queries);
           }),
           py::arg("endpoint"), py::arg("width"), py::arg("height"), py::arg("channels") = 3, py::arg("attempts") = 3,
           py::arg("backoff_ms") = 100, py::arg("timeout_s") = 30, py::arg("max_queries") = OracleBudget::kUnlimited)
      .def_property_readonly("requests_sent", &RemoteOracle::requests_sent);

  py::class_<CallableOracle, Oracle>(m, "CallableOracle")
      .def(py::init([](py::function fn, int w, int h, int c, std::string id, std::uint64_t max_queries) {
             return std::make_unique<CallableOracle>(std::move(fn), InputDims{w, h, c}, std::move(id), max_queries);
           }),
           py::arg("fn"), py::arg("width"), py::arg("height"), py::arg("channels") = 3, py::arg("id") = "python",
           py::arg("max_queries") = OracleBudget::kUnlimited);

  // Probing.
  py::class_<Patch>(m, "Patch")
      .def(py::init([](const Array& img, std::string class_id, double probability, std::string image_id) {
             Patch p;
             p.image = to_image(img);
             p.class_id = std::move(class_id);
             p.probability = probability;
             p.source = {std::move(image_id), {0, 0, p.image.width(), p.image.height()}, p.image.width()};
             return p;
           }),
           py::arg("image"), py::arg("class_id"), py::arg("probability") = 0.0, py::arg("image_id") = "patch")
      .def_property_readonly("image", [](const Patch& p) { return to_array(p.image); })
      .def_readonly("class_id", &Patch::class_id)
      .def_readonly("probability", &Patch::probability)
      .def_property_readonly("image_id", [](const Patch& p) { return p.source.image_id; })
      .def_property_readonly("window", [](const Patch& p) { return rect_tuple(p.source.window); })
      .def_property_readonly("id", &Patch::id);

  m.def("extract_best_patch",
        [](const std::vector<std::pair<std::string, Array>>& images, const std::string& class_id,
           const std::vector<int>& sizes, Oracle& oracle, bool resized, int jobs) {
          const auto sources = to_sources(images);
          py::gil_scoped_release release;
          return extract_best_patch(sources, class_id, sizes, oracle,
                                    {resized ? WindowPresentation::kResized : WindowPresentation::kInPlace, jobs});
        },
        py::arg("images"), py::arg("class_id"), py::arg("window_sizes"), py::arg("oracle"), py::arg("resized") = false,
        py::arg("jobs") = 1);

  m.def("local_property_curve", [](const std::vector<Patch>& patches, const std::vector<int>& scales, Oracle& oracle) {
    std::vector<LocalCurvePoint> curve;
    {
      py::gil_scoped_release release;
      curve = local_property_curve(patches, scales, oracle);
    }
    py::list out;
    for (const auto& p : curve) out.append(py::make_tuple(p.scale, p.resized_mean, p.embedded_mean));
    return out;
  });

  m.def("spatial_map", [](const Patch& patch, int stride, Oracle& oracle, int jobs) {
    ProbabilityMap map;
    SpatialStats stats;
    {
      py::gil_scoped_release release;
      map = spatial_map(patch, stride, oracle, jobs);
      stats = spatial_stats(map);
    }
    py::dict d;
    py::list positions;
    for (const auto& r : map.positions) positions.append(rect_tuple(r));
    d["positions"] = positions;
    d["values"] = map.values;
    d["ratio"] = stats.ratio;
    d["max"] = stats.max;
    d["min"] = stats.min;
    d["argmax"] = rect_tuple(stats.argmax);
    d["argmin"] = rect_tuple(stats.argmin);
    return d;
  }, py::arg("patch"), py::arg("stride"), py::arg("oracle"), py::arg("jobs") = 1);

  m.def("greedy_cumulative", [](const Patch& patch, const std::string& mode, Oracle& oracle, int jobs) {
    if (mode != "activation" && mode != "inhibition") throw ParameterError("mode is 'activation' or 'inhibition'");
    PlacementTrace trace;
    {
      py::gil_scoped_release release;
      trace = greedy_cumulative(patch, mode == "activation" ? PlacementMode::kActivation : PlacementMode::kInhibition,
                                oracle, jobs);
    }
    py::dict d;
    py::list cells, probs;
    for (const auto& s : trace.steps) {
      cells.append(s.cell_index);
      probs.append(s.prob_after);
    }
    d["cells"] = cells;
    d["probabilities"] = probs;
    d["gain"] = trace.gain;
    return d;
  }, py::arg("patch"), py::arg("mode"), py::arg("oracle"), py::arg("jobs") = 1);

  // Attack.
  py::class_<AttackConfig>(m, "AttackConfig")
      .def(py::init([](double tau, int cols, int rows, int max_decoys, std::uint64_t query_budget, int jobs) {
             return AttackConfig{tau, cols, rows, max_decoys, query_budget, jobs};
           }),
           py::arg("tau") = 4.0, py::arg("grid_cols") = 4, py::arg("grid_rows") = 4, py::arg("max_decoys") = 0,
           py::arg("query_budget") = OracleBudget::kUnlimited, py::arg("jobs") = 1)
      .def_readwrite("tau", &AttackConfig::tau)
      .def_readwrite("grid_cols", &AttackConfig::grid_cols)
      .def_readwrite("grid_rows", &AttackConfig::grid_rows)
      .def_readwrite("max_decoys", &AttackConfig::max_decoys)
      .def_readwrite("query_budget", &AttackConfig::query_budget)
      .def_readwrite("jobs", &AttackConfig::jobs);

  py::class_<AttackResult>(m, "AttackResult")
      .def_readonly("fooled", &AttackResult::fooled)
      .def_readonly("decoys_used", &AttackResult::decoys_used)
      .def_readonly("placement_cells", &AttackResult::placement_cells)
      .def_readonly("target_class", &AttackResult::target_class)
      .def_readonly("adversarial_class", &AttackResult::adversarial_class)
      .def_readonly("p_target_initial", &AttackResult::p_target_initial)
      .def_readonly("p_target_final", &AttackResult::p_target_final)
      .def_readonly("p_target_trace", &AttackResult::p_target_trace)
      .def_readonly("queries_consumed", &AttackResult::queries_consumed)
      .def_property_readonly("stop_reason", [](const AttackResult& r) { return std::string(to_string(r.stop_reason)); })
      .def_property_readonly("perturbed_image", [](const AttackResult& r) { return to_array(r.perturbed_image); });

  m.def("select_decoy", [](const std::vector<Patch>& pool, double tau) { return select_decoy(pool, tau); });
  m.def("attack", [](const Array& target, const Decoy& decoy, const AttackConfig& cfg, Oracle& oracle) {
    const Image img = to_image(target);
    py::gil_scoped_release release;
    return attack(img, decoy, cfg, oracle);
  }, py::arg("target"), py::arg("decoy"), py::arg("config"), py::arg("oracle"));

  m.def("fooling_campaign",
        [](const std::vector<std::pair<std::string, Array>>& images, const Decoy& decoy, const AttackConfig& cfg,
           Oracle& oracle) {
          const auto sources = to_sources(images);
          CampaignReport rep;
          {
            py::gil_scoped_release release;
            rep = fooling_campaign(sources, decoy, cfg, oracle);
          }
          py::dict d;
          py::list rows;
          for (const auto& row : rep.rows) {
            py::dict r;
            r["image_id"] = row.image_id;
            r["error"] = row.error;
            r["result"] = row.result ? py::cast(*row.result) : py::none();
            rows.append(r);
          }
          d["rows"] = rows;
          d["total"] = rep.aggregate.total;
          d["fooled"] = rep.aggregate.fooled;
          d["failures"] = rep.aggregate.failures;
          d["fooling_ratio"] = rep.aggregate.fooling_ratio;
          d["fooled_by_decoy_budget"] = rep.aggregate.fooled_by_decoy_budget;
          return d;
        },
        py::arg("images"), py::arg("decoy"), py::arg("config"), py::arg("oracle"));

  // Campaigns.
  m.def("sample_images", &sample_images, py::arg("dir"), py::arg("n"), py::arg("seed"));
  m.def("default_window_sizes", &default_window_sizes);
  m.def("config_hash", [](const std::string& text, const std::filesystem::path& base) {
    return CampaignConfig::parse(text, base).hash();
  }, py::arg("config_json"), py::arg("base_dir") = ".");
  m.def("run_campaign", [](const std::string& text, const std::filesystem::path& base) {
    const CampaignConfig config = CampaignConfig::parse(text, base);
    RunOutcome r;
    {
      py::gil_scoped_release release;
      r = run(config);
    }
    return run_outcome(r);
  }, py::arg("config_json"), py::arg("base_dir") = ".");
  m.def("run_campaign_file", [](const std::filesystem::path& path) {
    const CampaignConfig config = CampaignConfig::load(path);
    RunOutcome r;
    {
      py::gil_scoped_release release;
      r = run(config);
    }
    return run_outcome(r);
  });
}
