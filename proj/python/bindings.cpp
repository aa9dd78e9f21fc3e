#include "facegate/cascade.hpp"
#include "facegate/detector.hpp"
#include "facegate/encoding.hpp"
#include "facegate/enhanced.hpp"
#include "facegate/error.hpp"
#include "facegate/eval.hpp"
#include "facegate/image.hpp"
#include "facegate/registry.hpp"

#include <pybind11/functional.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <cstring>
#include <memory>

namespace py = pybind11;
using namespace facegate;

namespace {

using U8Array = py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>;

// Images cross the boundary as numpy arrays: (h, w) for gray, (h, w, 3) for RGB.
GrayImage gray_from_array(const U8Array& a) {
    if (a.ndim() != 2) throw py::value_error("expected a 2-D uint8 array (height, width)");
    const int h = static_cast<int>(a.shape(0)), w = static_cast<int>(a.shape(1));
    std::vector<std::uint8_t> px(a.data(), a.data() + a.size());
    return GrayImage(w, h, std::move(px));
}

RgbImage rgb_from_array(const U8Array& a) {
    if (a.ndim() == 2) return gray_to_rgb(gray_from_array(a));
    if (a.ndim() != 3 || a.shape(2) != 3) throw py::value_error("expected a (height, width, 3) uint8 array");
    const int h = static_cast<int>(a.shape(0)), w = static_cast<int>(a.shape(1));
    std::vector<std::uint8_t> px(a.data(), a.data() + a.size());
    return RgbImage(w, h, std::move(px));
}

GrayImage any_to_gray(const U8Array& a) {
    return a.ndim() == 2 ? gray_from_array(a) : to_grayscale(rgb_from_array(a));
}

U8Array to_array(const GrayImage& img) {
    U8Array out({img.height(), img.width()});
    std::memcpy(out.mutable_data(), img.data().data(), img.data().size());
    return out;
}

U8Array to_array(const RgbImage& img) {
    U8Array out({img.height(), img.width(), 3});
    std::memcpy(out.mutable_data(), img.data().data(), img.data().size());
    return out;
}

py::tuple rect_tuple(const Rect& r) { return py::make_tuple(r.x, r.y, r.w, r.h); }

FaceEncoding encoding_from(const std::vector<double>& v) { return FaceEncoding(std::span<const double>(v)); }
std::vector<double> encoding_list(const FaceEncoding& e) { return {e.values().begin(), e.values().end()}; }

py::dict metric_dict(const MetricRow& m) {
    py::dict d;
    d["accuracy"] = m.accuracy;
    d["precision"] = m.precision_undefined ? py::object(py::none()) : py::float_(m.precision);
    d["recall"] = m.recall_undefined ? py::object(py::none()) : py::float_(m.recall);
    d["f1"] = m.f1_undefined ? py::object(py::none()) : py::float_(m.f1);
    return d;
}

ConfusionCounts counts_from(std::uint64_t tp, std::uint64_t fp, std::uint64_t tn, std::uint64_t fn) {
    ConfusionCounts c;
    c.tp = tp;
    c.fp = fp;
    c.tn = tn;
    c.fn = fn;
    return c;
}

py::object identification_dict(const IdentificationResult& r) {
    py::dict d;
    d["status"] = std::string(to_string(r.status));
    d["person_id"] = r.person_id ? py::object(py::str(*r.person_id)) : py::object(py::none());
    d["similarity_pct"] = r.similarity_pct ? py::object(py::float_(*r.similarity_pct)) : py::object(py::none());
    d["d_face"] = r.d_face ? py::object(py::float_(*r.d_face)) : py::object(py::none());
    d["alert"] = r.alert ? py::object(py::str(alert_json(*r.alert))) : py::object(py::none());
    return d;
}

py::dict person_dict(const PersonRecord& p) {
    py::dict d;
    d["person_id"] = p.person_id;
    d["display_name"] = p.display_name;
    d["info"] = p.info;
    d["provider"] = p.provider;
    d["encodings"] = p.encodings.size();
    d["enrolled_at_ms"] = p.enrolled_at_ms;
    return d;
}

// The C++ GatePass borrows its collaborators; the Python object owns them.
struct PyGatePass {
    std::shared_ptr<const CascadeModel> model;
    std::shared_ptr<PersonStore> store;
    ReferenceEmbedder embedder;
    std::unique_ptr<GatePass> gate;
};

}  // namespace

PYBIND11_MODULE(_facegate, m) {
    m.doc() = "Haar-cascade face detection, encoding matching and gate-pass registry";

    auto base = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
    auto data = py::register_exception<DataError>(m, "DataError", base.ptr());
    py::register_exception<NoFaceError>(m, "NoFaceError", data.ptr());
    py::register_exception<ParseError>(m, "ParseError", base.ptr());

    // --- images -----------------------------------------------------------
    m.def("read_image", [](const std::string& path) {
        const auto any = read_netpbm_file(path);
        if (auto g = std::get_if<GrayImage>(&any)) return to_array(*g);
        return to_array(std::get<RgbImage>(any));
    }, py::arg("path"), "Read a PGM/PPM file into a uint8 array.");
    m.def("write_image", [](const std::string& path, const U8Array& a) {
        if (a.ndim() == 2) write_netpbm_file(path, AnyImage(gray_from_array(a)));
        else write_netpbm_file(path, AnyImage(rgb_from_array(a)));
    }, py::arg("path"), py::arg("image"));
    m.def("to_grayscale", [](const U8Array& a) { return to_array(any_to_gray(a)); }, py::arg("image"));

    // --- cascade ----------------------------------------------------------
    py::class_<CascadeModel, std::shared_ptr<CascadeModel>>(m, "Cascade")
        .def_static("load", [](const std::string& path) { return std::make_shared<CascadeModel>(load_cascade_file(path)); },
                    py::arg("path"))
        .def_static("from_xml", [](const std::string& xml) { return std::make_shared<CascadeModel>(parse_cascade_xml(xml)); },
                    py::arg("xml"))
        .def_property_readonly("window", [](const CascadeModel& c) { return py::make_tuple(c.window_w, c.window_h); })
        .def_property_readonly("stage_count", [](const CascadeModel& c) { return c.stages.size(); })
        .def_property_readonly("stump_count", &CascadeModel::stump_count)
        .def("to_xml", [](const CascadeModel& c) { return to_cascade_xml(c); })
        .def("__repr__", [](const CascadeModel& c) {
            return "<Cascade " + std::to_string(c.window_w) + "x" + std::to_string(c.window_h) + ", " +
                   std::to_string(c.stages.size()) + " stages>";
        });

    // --- detection --------------------------------------------------------
    m.def("detect", [](const CascadeModel& model, const U8Array& image, double scale_factor, int min_neighbors,
                       std::pair<int, int> min_size, int threads) {
        DetectParams p;
        p.scale_factor = scale_factor;
        p.min_neighbors = min_neighbors;
        p.min_size = {min_size.first, min_size.second};
        p.threads = threads;
        const GrayImage gray = any_to_gray(image);
        std::vector<Detection> dets;
        {
            py::gil_scoped_release nogil;
            dets = detect_multiscale(model, gray, p);
        }
        py::list out;
        for (const auto& d : dets) out.append(py::make_tuple(rect_tuple(d.rect), d.neighbors));
        return out;
    }, py::arg("model"), py::arg("image"), py::arg("scale_factor") = 1.1, py::arg("min_neighbors") = 3,
       py::arg("min_size") = std::pair<int, int>{30, 30}, py::arg("threads") = 1,
       "Multi-scale detection. Returns [((x, y, w, h), neighbors), ...].");

    m.def("detect_enhanced", [](const CascadeModel& model, const U8Array& image, std::optional<std::string> schedule,
                                double center_radius, int threads) {
        EnhancedOptions opts;
        if (schedule) opts.schedule = SweepSchedule::parse(*schedule);
        opts.policy.center_radius_fraction = center_radius;
        opts.threads = threads;
        const GrayImage gray = any_to_gray(image);
        EnhancedResult res;
        {
            py::gil_scoped_release nogil;
            res = detect_enhanced(model, gray, opts);
        }
        py::dict d;
        d["passes_run"] = res.passes_run;
        d["stopping_step"] = res.stopping_step ? py::object(py::int_(*res.stopping_step)) : py::object(py::none());
        py::list dets;
        for (const auto& det : res.stopping_detections) dets.append(rect_tuple(det.rect));
        d["detections"] = dets;
        if (res.face) {
            py::dict f;
            f["rect"] = rect_tuple(res.face->rect);
            f["dist_to_center"] = res.face->dist_to_center;
            f["params"] = res.face->used_params.label();
            f["candidates"] = res.face->candidates_at_stop;
            d["face"] = f;
        } else {
            d["face"] = py::none();
        }
        return d;
    }, py::arg("model"), py::arg("image"), py::arg("schedule") = py::none(), py::arg("center_radius") = 0.25,
       py::arg("threads") = 1);

    m.def("default_schedule", [] { return default_schedule().to_string(); });

    // --- encodings --------------------------------------------------------
    m.attr("ENCODING_DIMS") = kEncodingDims;
    m.attr("EMBEDDER_ID") = ReferenceEmbedder::kId;

    m.def("embed", [](const U8Array& crop) { return encoding_list(reference_embed(rgb_from_array(crop))); },
          py::arg("crop"), "Reference embedding of a face crop.");

    m.def("encode", [](const CascadeModel& model, const U8Array& image, const std::string& mode) {
        PipelineConfig cfg;
        if (mode == "baseline") cfg.mode = DetectorMode::Baseline;
        else if (mode != "enhanced") throw py::value_error("mode must be 'enhanced' or 'baseline'");
        const ReferenceEmbedder embedder;
        const auto res = encode_pipeline(model, rgb_from_array(image), embedder, cfg);
        return res.encoding ? py::object(py::cast(encoding_list(*res.encoding))) : py::object(py::none());
    }, py::arg("model"), py::arg("image"), py::arg("mode") = "enhanced",
       "Detect the face and return its encoding, or None when no face is found.");

    m.def("distance", [](const std::vector<double>& a, const std::vector<double>& b) {
        return euclidean_distance(encoding_from(a), encoding_from(b));
    }, py::arg("a"), py::arg("b"));

    m.def("similarity_pct", [](double d, double d_max) {
        MatcherConfig cfg;
        cfg.d_max = d_max;
        cfg.validate();
        return similarity_pct(d, cfg);
    }, py::arg("d_face"), py::arg("d_max") = 1.0);

    m.def("match", [](const std::vector<double>& a, const std::vector<double>& b, double d_max, double threshold) {
        MatcherConfig cfg;
        cfg.d_max = d_max;
        cfg.threshold_pct = threshold;
        cfg.validate();
        const auto r = match(encoding_from(a), encoding_from(b), cfg);
        py::dict d;
        d["d_face"] = r.d_face;
        d["similarity_pct"] = r.similarity_pct;
        d["is_match"] = r.is_match;
        return d;
    }, py::arg("a"), py::arg("b"), py::arg("d_max") = 1.0, py::arg("threshold") = 75.0);

    // --- evaluation -------------------------------------------------------
    m.def("metrics", [](std::uint64_t tp, std::uint64_t fp, std::uint64_t tn, std::uint64_t fn) {
        return metric_dict(metrics(counts_from(tp, fp, tn, fn)));
    }, py::arg("tp"), py::arg("fp"), py::arg("tn"), py::arg("fn"));

    m.def("total_score", [](std::array<std::uint64_t, 4> matching, std::array<std::uint64_t, 4> detection,
                            bool raw_mean) {
        const auto mm = metrics(counts_from(matching[0], matching[1], matching[2], matching[3]));
        const auto dm = metrics(counts_from(detection[0], detection[1], detection[2], detection[3]));
        return metric_dict(total_score(mm, dm, raw_mean ? TotalScoreRounding::RawMean
                                                        : TotalScoreRounding::RoundedComponents));
    }, py::arg("matching"), py::arg("detection"), py::arg("raw_mean") = false,
       "Mean of matching and detection metrics; counts are (tp, fp, tn, fn).");

    m.def("format_pct2", &format_pct2, py::arg("value"));

    m.def("evaluate", [](const std::string& manifest, std::optional<std::string> encodings,
                         std::shared_ptr<CascadeModel> model, const std::string& mode, int jobs, bool pretty) {
        const auto entries = load_manifest_file(manifest);
        Report r;
        if (encodings) {
            const auto lines = load_encodings_file(*encodings);
            r = run_eval_precomputed(entries, lines, EvalOptions{});
        } else {
            if (!model) throw py::value_error("pipeline evaluation needs a cascade model");
            PipelineEvalConfig cfg;
            if (mode == "baseline") cfg.pipeline.mode = DetectorMode::Baseline;
            else if (mode != "enhanced") throw py::value_error("mode must be 'enhanced' or 'baseline'");
            cfg.jobs = jobs;
            const ReferenceEmbedder embedder;
            const auto base = std::filesystem::path(manifest).parent_path().string();
            py::gil_scoped_release nogil;
            r = run_eval_pipeline(entries, base, *model, embedder, cfg);
        }
        return report_json(r, pretty);
    }, py::arg("manifest"), py::arg("encodings") = py::none(), py::arg("model") = nullptr,
       py::arg("mode") = "enhanced", py::arg("jobs") = 1, py::arg("pretty") = false,
       "Evaluate a labelled manifest; returns the report as a JSON string.");

    // --- registry ---------------------------------------------------------
    py::class_<PersonStore, std::shared_ptr<PersonStore>>(m, "PersonStore")
        .def(py::init<>())
        .def(py::init<std::filesystem::path>(), py::arg("path"))
        .def("__len__", &PersonStore::size)
        .def("__contains__", &PersonStore::contains)
        .def("get", [](const PersonStore& s, const std::string& id) {
            const auto p = s.find(id);
            return p ? py::object(person_dict(*p)) : py::object(py::none());
        }, py::arg("person_id"))
        .def("people", [](const PersonStore& s) {
            py::list out;
            for (const auto& p : s.snapshot()) out.append(person_dict(p));
            return out;
        })
        .def("persist_to", &PersonStore::persist_to, py::arg("path"))
        .def_property_readonly("warnings", &PersonStore::warnings);

    py::class_<PyGatePass>(m, "GatePass")
        .def(py::init([](std::shared_ptr<CascadeModel> model, std::shared_ptr<PersonStore> store,
                         std::optional<std::filesystem::path> alert_log, std::optional<std::string> alert_url,
                         std::function<void(const std::string&)> on_alert, double d_max, double threshold) {
                 auto self = std::make_unique<PyGatePass>();
                 self->model = std::move(model);
                 self->store = std::move(store);
                 GatePassConfig cfg;
                 cfg.matcher.d_max = d_max;
                 cfg.matcher.threshold_pct = threshold;
                 cfg.matcher.validate();
                 cfg.alert_log = std::move(alert_log);
                 cfg.alert_url = std::move(alert_url);
                 if (on_alert) {
                     cfg.on_alert = [cb = std::move(on_alert)](const AlertEvent& a) {
                         py::gil_scoped_acquire gil;
                         cb(alert_json(a));
                     };
                 }
                 self->gate = std::make_unique<GatePass>(*self->model, self->embedder, *self->store, std::move(cfg));
                 return self;
             }),
             py::arg("model"), py::arg("store"), py::arg("alert_log") = py::none(), py::arg("alert_url") = py::none(),
             py::arg("on_alert") = nullptr, py::arg("d_max") = 1.0, py::arg("threshold") = 75.0)
        .def("enroll", [](PyGatePass& g, const std::string& person_id, const std::string& name, const U8Array& image,
                          const std::map<std::string, std::string>& info) {
            return person_dict(g.gate->enroll(person_id, name, info, rgb_from_array(image)));
        }, py::arg("person_id"), py::arg("name"), py::arg("image"),
           py::arg("info") = std::map<std::string, std::string>{},
           "Enroll a face; an empty person_id generates one.")
        .def("identify", [](PyGatePass& g, const U8Array& frame, const std::string& frame_ref) {
            return identification_dict(g.gate->identify(rgb_from_array(frame), frame_ref));
        }, py::arg("frame"), py::arg("frame_ref") = "");
}
