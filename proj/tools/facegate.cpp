// facegate command-line tool: detection, encoding, matching, evaluation and
// the gate-pass registry. Results go to stdout as JSON; diagnostics go to
// stderr. Exit status: 0 success, 1 usage error, 2 data error.

#include "facegate/cascade.hpp"
#include "facegate/detector.hpp"
#include "facegate/encoding.hpp"
#include "facegate/enhanced.hpp"
#include "facegate/error.hpp"
#include "facegate/eval.hpp"
#include "facegate/image.hpp"
#include "facegate/registry.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#ifndef FACEGATE_MODEL_DIR
#define FACEGATE_MODEL_DIR "models"
#endif

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;
using namespace facegate;

namespace {

struct UsageError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

struct Options {
    // model
    std::string model;
    std::string variant = "default";
    // detection
    std::string schedule;
    double center_radius = 0.25;
    std::string min_size = "30x30";
    int threads = 1;
    bool baseline = false;
    double scale_factor = 1.1;
    int min_neighbors = 3;
    // matching
    double threshold = 75.0;
    double d_max = 1.0;
    bool crop_color = false;
    // output
    bool pretty = false;
    // eval
    std::string manifest;
    std::string encodings;
    std::string images_dir;
    int jobs = 1;
    std::string out_json;
    std::string out_csv;
    bool keep_nonface_pairs = false;
    std::string total_rounding = "rounded";
    std::string threshold_sweep;
    // encode
    std::string out;
    // registry
    std::string store;
    std::string name;
    std::string person_id;
    std::vector<std::string> info;
    std::string alert_log;
    std::string alert_url;
    std::string frame_ref;
    // positional
    std::vector<std::string> images;
};

Size parse_size(const std::string& s) {
    Size out;
    const auto x = s.find_first_of("xX");
    try {
        std::size_t used = 0;
        if (x == std::string::npos) {
            out.w = out.h = std::stoi(s, &used);
            if (used != s.size()) throw std::invalid_argument(s);
        } else {
            out.w = std::stoi(s.substr(0, x), &used);
            if (used != x) throw std::invalid_argument(s);
            const auto rest = s.substr(x + 1);
            out.h = std::stoi(rest, &used);
            if (used != rest.size()) throw std::invalid_argument(s);
        }
    } catch (const std::exception&) {
        throw UsageError("--min-size must look like 30x30, got '" + s + "'");
    }
    if (out.w < 1 || out.h < 1) throw UsageError("--min-size must be positive");
    return out;
}

std::string model_path(const Options& o) {
    if (!o.model.empty()) return o.model;
    std::string dir = FACEGATE_MODEL_DIR;
    if (const char* env = std::getenv("FACEGATE_MODEL_DIR"); env != nullptr && *env != '\0') dir = env;
    return (fs::path(dir) / ("haarcascade_frontalface_" + o.variant + ".xml")).string();
}

CascadeModel load_model(const Options& o) { return load_cascade_file(model_path(o)); }

EnhancedOptions enhanced_options(const Options& o) {
    EnhancedOptions e;
    if (!o.schedule.empty()) e.schedule = SweepSchedule::parse(o.schedule);
    e.policy.center_radius_fraction = o.center_radius;
    e.policy.validate();
    e.min_size = parse_size(o.min_size);
    e.threads = o.threads;
    return e;
}

DetectParams baseline_params(const Options& o) {
    DetectParams p;
    p.scale_factor = o.scale_factor;
    p.min_neighbors = o.min_neighbors;
    p.min_size = parse_size(o.min_size);
    p.threads = o.threads;
    p.validate();
    return p;
}

PipelineConfig pipeline_config(const Options& o) {
    PipelineConfig c;
    c.mode = o.baseline ? DetectorMode::Baseline : DetectorMode::Enhanced;
    c.enhanced = enhanced_options(o);
    c.baseline = baseline_params(o);
    c.crop_source = o.crop_color ? CropSource::OriginalColor : CropSource::GrayToRgb;
    return c;
}

MatcherConfig matcher_config(const Options& o) {
    MatcherConfig m;
    m.threshold_pct = o.threshold;
    m.d_max = o.d_max;
    m.validate();
    return m;
}

json rect_json(const Rect& r) { return json{{"x", r.x}, {"y", r.y}, {"w", r.w}, {"h", r.h}}; }

json detection_json(const Detection& d) {
    json j = rect_json(d.rect);
    j["neighbors"] = d.neighbors;
    return j;
}

void print(const json& j, const Options& o) { std::cout << j.dump(o.pretty ? 2 : -1) << '\n'; }

void write_file(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out << text;
    out.flush();
    if (!out) throw DataError("cannot write " + path);
}

const std::string& single_image(const Options& o) {
    if (o.images.size() != 1) throw UsageError("expected exactly one image");
    return o.images.front();
}

int cmd_detect(const Options& o) {
    const auto model = load_model(o);
    const auto params = baseline_params(o);
    const auto& path = single_image(o);
    const auto dets = detect_multiscale(model, to_grayscale(read_netpbm_file(path)), params);
    json j;
    j["image"] = path;
    j["params"] = {{"scale_factor", params.scale_factor},
                   {"min_neighbors", params.min_neighbors},
                   {"min_size", {params.min_size.w, params.min_size.h}}};
    j["detections"] = json::array();
    for (const auto& d : dets) j["detections"].push_back(detection_json(d));
    print(j, o);
    return 0;
}

int cmd_detect_enhanced(const Options& o) {
    const auto model = load_model(o);
    const auto opts = enhanced_options(o);
    const auto& path = single_image(o);
    json passes = json::array();
    const auto res = detect_enhanced(model, to_grayscale(read_netpbm_file(path)), opts,
                                     [&](std::size_t, const SweepStep& step, std::span<const Detection> dets) {
                                         passes.push_back({{"params", step.label()}, {"detections", dets.size()}});
                                     });
    json j;
    j["image"] = path;
    j["schedule"] = opts.schedule.to_string();
    if (res.face) {
        json f = rect_json(res.face->rect);
        f["dist_to_center"] = res.face->dist_to_center;
        f["used_params"] = res.face->used_params.label();
        f["candidates_at_stop"] = res.face->candidates_at_stop;
        j["face"] = std::move(f);
    } else {
        j["face"] = nullptr;
    }
    j["passes"] = std::move(passes);
    j["stopping_detections"] = json::array();
    for (const auto& d : res.stopping_detections) j["stopping_detections"].push_back(detection_json(d));
    print(j, o);
    return 0;
}

int cmd_encode(const Options& o) {
    const auto model = load_model(o);
    const auto cfg = pipeline_config(o);
    const ReferenceEmbedder provider;

    // (id, file) pairs: manifest paths resolve against the manifest directory.
    std::vector<std::pair<std::string, std::string>> items;
    if (!o.manifest.empty()) {
        if (!o.images.empty()) throw UsageError("give either --manifest or image paths, not both");
        const auto base = o.images_dir.empty() ? fs::path(o.manifest).parent_path() : fs::path(o.images_dir);
        for (const auto& e : load_manifest_file(o.manifest)) items.emplace_back(e.path, (base / e.path).string());
    } else {
        if (o.images.empty()) throw UsageError("no images given");
        for (const auto& p : o.images) items.emplace_back(p, p);
    }

    std::string text;
    for (const auto& [id, file] : items) {
        const auto res = encode_pipeline(model, read_rgb_file(file), provider, cfg);
        EncodingLine line;
        line.id = id;
        line.provider = provider.id();
        line.vector = res.encoding;
        line.faces = res.detection.stopping_detections.size();
        text += encoding_line_json(line) + "\n";
    }
    if (o.out.empty()) {
        std::cout << text;
    } else {
        write_file(o.out, text);
    }
    return 0;
}

int cmd_match(const Options& o) {
    if (o.images.size() != 2) throw UsageError("match takes exactly two images");
    const auto model = load_model(o);
    const auto cfg = pipeline_config(o);
    const auto matcher = matcher_config(o);
    const ReferenceEmbedder provider;
    std::optional<FaceEncoding> enc[2];
    for (int i = 0; i < 2; ++i) {
        enc[i] = encode_pipeline(model, read_rgb_file(o.images[i]), provider, cfg).encoding;
        if (!enc[i]) throw DataError("no face detected in " + o.images[i]);
    }
    const auto m = match(*enc[0], *enc[1], matcher);
    json j;
    j["probe"] = o.images[0];
    j["gallery"] = o.images[1];
    j["provider"] = provider.id();
    j["d_face"] = m.d_face;
    j["similarity_pct"] = m.similarity_pct;
    j["threshold_pct"] = matcher.threshold_pct;
    j["match"] = m.is_match;
    print(j, o);
    return 0;
}

std::vector<double> parse_sweep(const std::string& spec) {
    double lo = 0, hi = 0, step = 0;
    char c1 = 0, c2 = 0;
    std::istringstream in(spec);
    if (!(in >> lo >> c1 >> hi >> c2 >> step) || c1 != ':' || c2 != ':' || !(step > 0) || hi < lo || !in.eof()) {
        throw UsageError("--threshold-sweep must look like 50:95:5");
    }
    std::vector<double> out;
    const auto n = static_cast<long>(std::floor((hi - lo) / step + 1e-9));
    for (long i = 0; i <= n; ++i) out.push_back(lo + static_cast<double>(i) * step);
    return out;
}

int cmd_eval(const Options& o) {
    if (o.manifest.empty()) throw UsageError("--manifest is required");
    if (o.jobs < 1) throw UsageError("--jobs must be >= 1");
    const auto entries = load_manifest_file(o.manifest);

    EvalOptions eo;
    eo.matcher = matcher_config(o);
    eo.rules.skip_clean_nonface_pairs = !o.keep_nonface_pairs;
    if (o.total_rounding == "rounded") {
        eo.rounding = TotalScoreRounding::RoundedComponents;
    } else if (o.total_rounding == "raw") {
        eo.rounding = TotalScoreRounding::RawMean;
    } else {
        throw UsageError("--total-rounding must be rounded or raw");
    }

    std::vector<ImageFacts> facts;
    std::string mode;
    std::string provider_id;
    if (!o.encodings.empty()) {
        const auto lines = load_encodings_file(o.encodings);
        facts = facts_from_encodings(entries, lines);
        mode = "precomputed";
        provider_id = lines.empty() ? "" : lines.front().provider;
    } else {
        const auto model = load_model(o);
        const ReferenceEmbedder provider;
        const auto base = o.images_dir.empty() ? fs::path(o.manifest).parent_path() : fs::path(o.images_dir);
        facts = compute_image_facts(entries, base.string(), model, provider, pipeline_config(o), o.jobs);
        mode = "pipeline";
        provider_id = provider.id();
    }

    Report report = evaluate_pairs(entries, facts, eo);
    report.mode = mode;
    report.provider = provider_id;

    std::string report_text = report_json(report, o.pretty);
    if (!o.threshold_sweep.empty()) {
        auto doc = json::parse(report_text);
        json sweep = json::array();
        for (double t : parse_sweep(o.threshold_sweep)) {
            EvalOptions so = eo;
            so.matcher.threshold_pct = t;
            const Report r = evaluate_pairs(entries, facts, so);
            json row{{"threshold_pct", t},
                     {"tp", r.matching.tp},
                     {"fp", r.matching.fp},
                     {"tn", r.matching.tn},
                     {"fn", r.matching.fn}};
            if (r.matching_metrics) {
                row["accuracy"] = r.matching_metrics->accuracy;
                row["precision"] = r.matching_metrics->precision;
                row["recall"] = r.matching_metrics->recall;
                row["f1"] = r.matching_metrics->f1;
            }
            sweep.push_back(std::move(row));
        }
        doc["threshold_sweep"] = std::move(sweep);
        report_text = doc.dump(o.pretty ? 2 : -1) + "\n";
    }

    if (!o.out_csv.empty()) write_file(o.out_csv, report_csv(report));
    if (o.out_json.empty()) {
        std::cout << report_text;
    } else {
        write_file(o.out_json, report_text);
        std::cout << report_csv(report);
    }
    if (report.errored > 0) std::cerr << "facegate: " << report.errored << " comparisons errored\n";
    return 0;
}

std::map<std::string, std::string> parse_info(const std::vector<std::string>& kvs) {
    std::map<std::string, std::string> out;
    for (const auto& kv : kvs) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos || eq == 0) throw UsageError("--info expects key=value, got '" + kv + "'");
        out[kv.substr(0, eq)] = kv.substr(eq + 1);
    }
    return out;
}

GatePassConfig gatepass_config(const Options& o) {
    GatePassConfig c;
    c.pipeline = pipeline_config(o);
    c.matcher = matcher_config(o);
    if (!o.alert_log.empty()) c.alert_log = o.alert_log;
    if (!o.alert_url.empty()) c.alert_url = o.alert_url;
    return c;
}

int cmd_enroll(const Options& o) {
    if (o.store.empty()) throw UsageError("--store is required");
    if (o.person_id.empty() && o.name.empty()) throw UsageError("give --name or --id");
    const auto model = load_model(o);
    const ReferenceEmbedder provider;
    PersonStore store{fs::path(o.store)};
    GatePass gate(model, provider, store, gatepass_config(o));
    const auto rec = gate.enroll(o.person_id, o.name, parse_info(o.info), read_rgb_file(single_image(o)));
    json j;
    j["personId"] = rec.person_id;
    j["displayName"] = rec.display_name;
    j["provider"] = rec.provider;
    j["encodings"] = rec.encodings.size();
    print(j, o);
    return 0;
}

int cmd_identify(const Options& o) {
    if (o.store.empty()) throw UsageError("--store is required");
    const auto model = load_model(o);
    const ReferenceEmbedder provider;
    PersonStore store{fs::path(o.store)};
    GatePass gate(model, provider, store, gatepass_config(o));
    const auto& path = single_image(o);
    const auto res = gate.identify(read_rgb_file(path), o.frame_ref.empty() ? path : o.frame_ref);
    json j;
    j["image"] = path;
    j["status"] = std::string(to_string(res.status));
    j["personId"] = res.person_id ? json(*res.person_id) : json(nullptr);
    if (res.person_id) {
        if (const auto rec = store.find(*res.person_id)) j["displayName"] = rec->display_name;
    }
    j["similarity_pct"] = res.similarity_pct ? json(*res.similarity_pct) : json(nullptr);
    j["d_face"] = res.d_face ? json(*res.d_face) : json(nullptr);
    j["alert"] = res.alert ? json(std::string(to_string(res.alert->reason))) : json(nullptr);
    print(j, o);
    return 0;
}

void add_model_flags(CLI::App* sub, Options& o) {
    sub->add_option("--model", o.model, "Cascade XML file (overrides --cascade-variant)");
    sub->add_option("--cascade-variant", o.variant, "Bundled frontal-face cascade")
        ->check(CLI::IsMember({"default", "alt", "alt2"}));
}

void add_detect_flags(CLI::App* sub, Options& o) {
    sub->add_option("--min-size", o.min_size, "Smallest face, WxH or N");
    sub->add_option("--threads", o.threads, "Worker threads for the scale loop")->check(CLI::PositiveNumber);
}

void add_enhanced_flags(CLI::App* sub, Options& o) {
    sub->add_option("--schedule", o.schedule, "Sweep steps, e.g. 1.10/10,1.09/9,...,1.01/1");
    sub->add_option("--center-radius", o.center_radius, "Centre disc radius as a fraction of the diagonal");
}

void add_baseline_flags(CLI::App* sub, Options& o) {
    sub->add_option("--scale-factor", o.scale_factor, "Baseline scale factor");
    sub->add_option("--min-neighbors", o.min_neighbors, "Baseline minimum neighbours");
}

void add_pipeline_flags(CLI::App* sub, Options& o) {
    add_model_flags(sub, o);
    add_detect_flags(sub, o);
    add_enhanced_flags(sub, o);
    add_baseline_flags(sub, o);
    sub->add_flag("--baseline", o.baseline, "Use one baseline detection pass instead of the sweep");
    sub->add_flag("--crop-color", o.crop_color, "Crop the colour frame instead of the grayscale one");
}

void add_matcher_flags(CLI::App* sub, Options& o) {
    sub->add_option("--threshold", o.threshold, "Match threshold in percent");
    sub->add_option("--d-max", o.d_max, "Distance mapped to the low end of the similarity scale");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Face detection, matching and gate-pass registry"};
    app.require_subcommand(1);
    app.fallthrough();
    app.set_config("--config", "", "Read options from a TOML or INI file (flags win)");
    Options o;
    app.add_flag("--pretty", o.pretty, "Indent JSON output");

    auto* detect = app.add_subcommand("detect", "Baseline multi-scale detection");
    add_model_flags(detect, o);
    add_detect_flags(detect, o);
    add_baseline_flags(detect, o);
    detect->add_option("image", o.images, "PGM/PPM image")->required();

    auto* enhanced = app.add_subcommand("detect-enhanced", "Parameter sweep with centre-nearest face selection");
    add_model_flags(enhanced, o);
    add_detect_flags(enhanced, o);
    add_enhanced_flags(enhanced, o);
    enhanced->add_option("image", o.images, "PGM/PPM image")->required();

    auto* encode = app.add_subcommand("encode", "Print one encodings JSON line per image");
    add_pipeline_flags(encode, o);
    encode->add_option("--manifest", o.manifest, "Encode every manifest entry (ids are manifest paths)");
    encode->add_option("--images-dir", o.images_dir, "Directory manifest paths are relative to");
    encode->add_option("--out", o.out, "Write to this file instead of stdout");
    encode->add_option("images", o.images, "PGM/PPM images");

    auto* matchc = app.add_subcommand("match", "Compare the faces of two images");
    add_pipeline_flags(matchc, o);
    add_matcher_flags(matchc, o);
    matchc->add_option("images", o.images, "Two PGM/PPM images")->required()->expected(2);

    auto* evalc = app.add_subcommand("eval", "All-pairs evaluation over a manifest");
    add_pipeline_flags(evalc, o);
    add_matcher_flags(evalc, o);
    evalc->add_option("--manifest", o.manifest, "CSV with path,label,has_face")->required();
    evalc->add_option("--encodings", o.encodings, "Precomputed encodings JSON lines (skips detection)");
    evalc->add_option("--images-dir", o.images_dir, "Directory manifest paths are relative to");
    evalc->add_option("--jobs", o.jobs, "Worker threads for the per-image stage");
    evalc->add_option("--out-json", o.out_json, "Write the JSON report here (stdout then gets the CSV)");
    evalc->add_option("--out-csv", o.out_csv, "Write the CSV summary here");
    evalc->add_flag("--keep-nonface-pairs", o.keep_nonface_pairs,
                    "Count pairs of two undetected non-face images as true negatives");
    evalc->add_option("--total-rounding", o.total_rounding, "TOTAL SCORE convention: rounded or raw");
    evalc->add_option("--threshold-sweep", o.threshold_sweep, "Also report matching metrics for LO:HI:STEP thresholds");

    auto* enroll = app.add_subcommand("enroll", "Add a face to the person store");
    add_pipeline_flags(enroll, o);
    add_matcher_flags(enroll, o);
    enroll->add_option("--store", o.store, "Person store (JSON lines)")->required();
    enroll->add_option("--name", o.name, "Display name");
    enroll->add_option("--id", o.person_id, "Person id (generated when omitted)");
    enroll->add_option("--info", o.info, "Extra key=value details (repeatable)");
    enroll->add_option("image", o.images, "PGM/PPM image")->required();

    auto* identify = app.add_subcommand("identify", "Recognise the face in a frame");
    add_pipeline_flags(identify, o);
    add_matcher_flags(identify, o);
    identify->add_option("--store", o.store, "Person store (JSON lines)")->required();
    identify->add_option("--alert-log", o.alert_log, "Append alert events to this file");
    identify->add_option("--alert-url", o.alert_url, "POST alert events to this http:// URL")
        ->envname("GATEPASS_ALERT_URL");
    identify->add_option("--frame-ref", o.frame_ref, "Frame reference recorded in alerts (default: image path)");
    identify->add_option("image", o.images, "PGM/PPM image")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 1;
    }

    try {
        if (*detect) return cmd_detect(o);
        if (*enhanced) return cmd_detect_enhanced(o);
        if (*encode) return cmd_encode(o);
        if (*matchc) return cmd_match(o);
        if (*evalc) return cmd_eval(o);
        if (*enroll) return cmd_enroll(o);
        if (*identify) return cmd_identify(o);
    } catch (const UsageError& e) {
        std::cerr << "facegate: " << e.what() << '\n';
        return 1;
    } catch (const Error& e) {
        std::cerr << "facegate: " << e.what() << '\n';
        return 2;
    } catch (const std::invalid_argument& e) {
        std::cerr << "facegate: " << e.what() << '\n';
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "facegate: " << e.what() << '\n';
        return 2;
    }
    return 1;
}
