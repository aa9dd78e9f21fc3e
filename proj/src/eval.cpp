#include "facegate/eval.hpp"

#include "facegate/error.hpp"
#include "facegate/image.hpp"

#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>
#include <stdexcept>
#include <thread>
#include <unordered_map>
#include <unordered_set>

namespace facegate {

using json = nlohmann::ordered_json;

namespace {

std::string read_text_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open " + path);
    return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

// Splits one CSV record. Fields may be double-quoted ("" is an escaped quote).
std::vector<std::string> split_csv_line(std::string_view line, std::size_t line_no) {
    std::vector<std::string> fields;
    std::string cur;
    bool quoted = false;
    bool was_quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    cur += '"';
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                cur += c;
            }
        } else if (c == '"') {
            if (!cur.empty() || was_quoted) {
                throw ParseError(ParseErrorKind::MalformedRow, line_no, "stray quote in field");
            }
            quoted = true;
            was_quoted = true;
        } else if (c == ',') {
            fields.push_back(std::move(cur));
            cur.clear();
            was_quoted = false;
        } else {
            if (was_quoted) throw ParseError(ParseErrorKind::MalformedRow, line_no, "text after closing quote");
            cur += c;
        }
    }
    if (quoted) throw ParseError(ParseErrorKind::MalformedRow, line_no, "unterminated quoted field");
    fields.push_back(std::move(cur));
    return fields;
}

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

}  // namespace

std::vector<ManifestEntry> load_manifest(std::string_view csv) {
    if (csv.starts_with("\xEF\xBB\xBF")) csv.remove_prefix(3);
    std::vector<ManifestEntry> entries;
    std::unordered_map<std::string, std::size_t> seen;
    bool header_done = false;
    std::size_t line_no = 0;
    while (!csv.empty()) {
        const auto nl = csv.find('\n');
        const std::string_view raw = csv.substr(0, nl);
        csv = nl == std::string_view::npos ? std::string_view{} : csv.substr(nl + 1);
        ++line_no;
        const auto line = trim(raw);
        if (line.empty()) continue;

        auto fields = split_csv_line(line, line_no);
        for (auto& f : fields) f = std::string(trim(f));
        if (!header_done) {
            if (fields != std::vector<std::string>{"path", "label", "has_face"}) {
                throw ParseError(ParseErrorKind::MalformedRow, line_no, "manifest header must be path,label,has_face");
            }
            header_done = true;
            continue;
        }
        if (fields.size() != 3) {
            throw ParseError(ParseErrorKind::MalformedRow, line_no,
                             "expected 3 fields, found " + std::to_string(fields.size()));
        }
        ManifestEntry e;
        e.path = fields[0];
        e.label = fields[1];
        if (e.path.empty()) throw ParseError(ParseErrorKind::MalformedRow, line_no, "empty path");
        if (fields[2] == "true") {
            e.has_face = true;
        } else if (fields[2] == "false") {
            e.has_face = false;
        } else {
            throw ParseError(ParseErrorKind::MalformedRow, line_no, "has_face must be true or false, got '" + fields[2] + "'");
        }
        if (e.has_face == e.label.empty()) {
            throw ParseError(ParseErrorKind::InconsistentEntry, line_no,
                             e.has_face ? "face image '" + e.path + "' needs a label"
                                        : "non-face image '" + e.path + "' must not have a label");
        }
        if (auto [it, inserted] = seen.emplace(e.path, line_no); !inserted) {
            throw ParseError(ParseErrorKind::DuplicateEntry, line_no,
                             "path '" + e.path + "' already listed on line " + std::to_string(it->second));
        }
        entries.push_back(std::move(e));
    }
    if (!header_done) throw ParseError(ParseErrorKind::MalformedRow, 1, "manifest is empty");
    return entries;
}

std::vector<ManifestEntry> load_manifest_file(const std::string& path) { return load_manifest(read_text_file(path)); }

std::vector<PairIndex> pair_plan(std::span<const ManifestEntry> entries) {
    if (entries.size() < 2) throw std::invalid_argument("pair plan needs at least 2 entries");
    std::vector<std::size_t> order(entries.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return entries[a].path < entries[b].path; });

    std::vector<PairIndex> plan;
    plan.reserve(entries.size() * (entries.size() - 1));
    for (std::size_t p : order) {
        for (std::size_t g : order) {
            if (p != g) plan.push_back({p, g});
        }
    }
    return plan;
}

std::string_view to_string(Cell c) {
    switch (c) {
        case Cell::TP: return "TP";
        case Cell::FP: return "FP";
        case Cell::TN: return "TN";
        case Cell::FN: return "FN";
    }
    return "?";
}

std::string_view to_string(DetectionOutcome o) {
    switch (o) {
        case DetectionOutcome::ExactlyOne: return "exactly-one";
        case DetectionOutcome::Multiple: return "multiple";
        case DetectionOutcome::NoneOnFace: return "none-on-face";
        case DetectionOutcome::NoneOnNonface: return "none-on-nonface";
        case DetectionOutcome::FoundOnNonface: return "found-on-nonface";
    }
    return "?";
}

DetectionOutcome detection_outcome(bool has_face, std::size_t count) {
    if (has_face) {
        if (count == 0) return DetectionOutcome::NoneOnFace;
        return count == 1 ? DetectionOutcome::ExactlyOne : DetectionOutcome::Multiple;
    }
    return count == 0 ? DetectionOutcome::NoneOnNonface : DetectionOutcome::FoundOnNonface;
}

Cell classify_detection(bool has_face, std::size_t count) {
    switch (detection_outcome(has_face, count)) {
        case DetectionOutcome::ExactlyOne: return Cell::TP;
        case DetectionOutcome::NoneOnFace: return Cell::FN;
        case DetectionOutcome::NoneOnNonface: return Cell::TN;
        case DetectionOutcome::Multiple:
        case DetectionOutcome::FoundOnNonface: return Cell::FP;
    }
    return Cell::FP;
}

std::optional<Cell> classify_matching(const PairFacts& facts, const MatchingRules& rules) {
    if (facts.face_undetected) return Cell::FP;
    if (facts.clean_nonface_pair && rules.skip_clean_nonface_pairs) return std::nullopt;
    const bool predicted = facts.predicted_match.value_or(false);
    if (facts.truth_match) return predicted ? Cell::TP : Cell::FN;
    return predicted ? Cell::FP : Cell::TN;
}

void ConfusionCounts::add(Cell c) noexcept {
    switch (c) {
        case Cell::TP: ++tp; break;
        case Cell::FP: ++fp; break;
        case Cell::TN: ++tn; break;
        case Cell::FN: ++fn; break;
    }
}

MetricRow metrics(const ConfusionCounts& c) {
    if (c.total() == 0) throw std::invalid_argument("metrics need at least one nonzero count");
    MetricRow m;
    const auto tp = static_cast<double>(c.tp);
    m.accuracy = 100.0 * static_cast<double>(c.tp + c.tn) / static_cast<double>(c.total());
    if (c.tp + c.fp == 0) {
        m.precision_undefined = true;
    } else {
        m.precision = 100.0 * tp / static_cast<double>(c.tp + c.fp);
    }
    if (c.tp + c.fn == 0) {
        m.recall_undefined = true;
    } else {
        m.recall = 100.0 * tp / static_cast<double>(c.tp + c.fn);
    }
    if (m.precision + m.recall == 0.0) {
        m.f1_undefined = true;
    } else {
        m.f1 = 2.0 * m.precision * m.recall / (m.precision + m.recall);
    }
    return m;
}

long long hundredths_half_up(double v) {
    // The slack absorbs representation error in values such as 72.225 that
    // are exact halves in decimal but land just below in binary.
    return static_cast<long long>(std::floor(v * 100.0 + 0.5 + 1e-7));
}

std::string format_pct2(double v) {
    const long long h = hundredths_half_up(v);
    const long long mag = h < 0 ? -h : h;
    char buf[48];
    std::snprintf(buf, sizeof buf, "%s%lld.%02lld", h < 0 ? "-" : "", mag / 100, mag % 100);
    return buf;
}

MetricRow total_score(const MetricRow& matching, const MetricRow& detection, TotalScoreRounding rounding) {
    auto mean = [rounding](double a, double b) {
        if (rounding == TotalScoreRounding::RawMean) return (a + b) / 2.0;
        return static_cast<double>(hundredths_half_up(a) + hundredths_half_up(b)) / 200.0;
    };
    MetricRow t;
    t.accuracy = mean(matching.accuracy, detection.accuracy);
    t.precision = mean(matching.precision, detection.precision);
    t.recall = mean(matching.recall, detection.recall);
    t.f1 = mean(matching.f1, detection.f1);
    t.precision_undefined = matching.precision_undefined || detection.precision_undefined;
    t.recall_undefined = matching.recall_undefined || detection.recall_undefined;
    t.f1_undefined = matching.f1_undefined || detection.f1_undefined;
    return t;
}

Report evaluate_pairs(std::span<const ManifestEntry> entries, std::span<const ImageFacts> facts,
                      const EvalOptions& options) {
    if (facts.size() != entries.size()) throw std::invalid_argument("image facts do not line up with the manifest");
    options.matcher.validate();

    Report r;
    r.images = entries.size();
    r.options = options;
    const auto plan = pair_plan(entries);
    r.records.reserve(plan.size());
    for (const auto& [pi, gi] : plan) {
        const auto& pe = entries[pi];
        const auto& ge = entries[gi];
        const auto& pf = facts[pi];
        const auto& gf = facts[gi];

        ComparisonRecord rec;
        rec.probe = pe.path;
        rec.gallery = ge.path;
        rec.truth_match = pe.has_face && ge.has_face && pe.label == ge.label;
        if (pf.error || gf.error) {
            rec.error = pf.error ? pe.path + ": " + *pf.error : ge.path + ": " + *gf.error;
            ++r.errored;
            r.records.push_back(std::move(rec));
            continue;
        }

        rec.outcome = detection_outcome(pe.has_face, pf.face_count);
        rec.detection_cell = classify_detection(pe.has_face, pf.face_count);
        r.detection.add(*rec.detection_cell);

        if (pf.encoding && gf.encoding) {
            const auto m = match(*pf.encoding, *gf.encoding, options.matcher);
            rec.d_face = m.d_face;
            rec.similarity_pct = m.similarity_pct;
            rec.predicted_match = m.is_match;
        }
        PairFacts pair;
        pair.truth_match = rec.truth_match;
        pair.predicted_match = rec.predicted_match;
        pair.face_undetected = (pe.has_face && !pf.encoding) || (ge.has_face && !gf.encoding);
        pair.clean_nonface_pair = !pe.has_face && !ge.has_face && pf.face_count == 0 && gf.face_count == 0;
        rec.matching_cell = classify_matching(pair, options.rules);
        if (rec.matching_cell) {
            r.matching.add(*rec.matching_cell);
        } else {
            rec.skipped = true;
            ++r.skipped;
        }
        r.records.push_back(std::move(rec));
    }

    if (r.detection.total() > 0) r.detection_metrics = metrics(r.detection);
    if (r.matching.total() > 0) r.matching_metrics = metrics(r.matching);
    if (r.detection_metrics && r.matching_metrics) {
        r.total = total_score(*r.matching_metrics, *r.detection_metrics, options.rounding);
    }
    return r;
}

std::vector<EncodingLine> load_encodings(std::string_view jsonl) {
    std::vector<EncodingLine> out;
    std::unordered_set<std::string> ids;
    std::size_t line_no = 0;
    while (!jsonl.empty()) {
        const auto nl = jsonl.find('\n');
        const std::string_view line = trim(jsonl.substr(0, nl));
        jsonl = nl == std::string_view::npos ? std::string_view{} : jsonl.substr(nl + 1);
        ++line_no;
        if (line.empty()) continue;

        json doc;
        try {
            doc = json::parse(line);
        } catch (const json::parse_error& e) {
            throw ParseError(ParseErrorKind::MalformedRow, line_no, std::string("invalid JSON: ") + e.what());
        }
        EncodingLine e;
        try {
            e.id = doc.at("id").get<std::string>();
            e.provider = doc.at("provider").get<std::string>();
            const auto& v = doc.at("vector");
            if (!v.is_null()) {
                const auto values = v.get<std::vector<double>>();
                e.vector = FaceEncoding(values);
            }
            if (doc.contains("faces")) {
                const auto& f = doc.at("faces");
                if (!f.is_number_unsigned()) throw std::invalid_argument("faces must be a non-negative integer");
                e.faces = f.get<std::size_t>();
            } else {
                e.faces = e.vector ? 1 : 0;
            }
        } catch (const json::exception& ex) {
            throw ParseError(ParseErrorKind::MalformedRow, line_no, ex.what());
        } catch (const std::invalid_argument& ex) {
            throw ParseError(ParseErrorKind::InvalidValue, line_no, ex.what());
        }
        if (e.vector.has_value() != (e.faces > 0)) {
            throw ParseError(ParseErrorKind::InconsistentEntry, line_no,
                             "'" + e.id + "': a vector requires faces >= 1 and null requires faces = 0");
        }
        if (!out.empty() && e.provider != out.front().provider) {
            throw ParseError(ParseErrorKind::InconsistentEntry, line_no,
                             "provider '" + e.provider + "' differs from '" + out.front().provider + "'");
        }
        if (!ids.insert(e.id).second) {
            throw ParseError(ParseErrorKind::DuplicateEntry, line_no, "id '" + e.id + "' appears twice");
        }
        out.push_back(std::move(e));
    }
    return out;
}

std::vector<EncodingLine> load_encodings_file(const std::string& path) { return load_encodings(read_text_file(path)); }

std::string encoding_line_json(const EncodingLine& line) {
    json doc;
    doc["id"] = line.id;
    doc["provider"] = line.provider;
    if (line.vector) {
        const auto v = line.vector->values();
        doc["vector"] = std::vector<double>(v.begin(), v.end());
    } else {
        doc["vector"] = nullptr;
    }
    doc["faces"] = line.faces;
    return doc.dump();
}

std::vector<ImageFacts> compute_image_facts(std::span<const ManifestEntry> entries, const std::string& base_dir,
                                            const CascadeModel& model, const EmbeddingProvider& provider,
                                            const PipelineConfig& pipeline, int jobs) {
    if (jobs < 1) throw std::invalid_argument("jobs must be >= 1");
    const std::filesystem::path base(base_dir);
    for (const auto& e : entries) {
        const auto p = base / e.path;
        if (!std::filesystem::is_regular_file(p)) throw DataError("missing image " + p.string());
    }

    std::vector<ImageFacts> facts(entries.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i = next++; i < entries.size(); i = next++) {
            auto& f = facts[i];
            try {
                const RgbImage img = read_rgb_file((base / entries[i].path).string());
                auto res = encode_pipeline(model, img, provider, pipeline);
                f.face_count = res.detection.stopping_detections.size();
                f.encoding = std::move(res.encoding);
            } catch (const std::exception& ex) {
                f.error = ex.what();
            }
        }
    };
    const auto n = static_cast<std::size_t>(jobs) < entries.size() ? static_cast<std::size_t>(jobs) : entries.size();
    if (n <= 1) {
        worker();
    } else {
        std::vector<std::jthread> pool;
        for (std::size_t t = 0; t < n; ++t) pool.emplace_back(worker);
    }
    return facts;
}

std::vector<ImageFacts> facts_from_encodings(std::span<const ManifestEntry> entries,
                                             std::span<const EncodingLine> lines) {
    std::unordered_map<std::string, const EncodingLine*> by_id;
    for (const auto& l : lines) by_id.emplace(l.id, &l);
    std::vector<ImageFacts> facts;
    facts.reserve(entries.size());
    for (const auto& e : entries) {
        const auto it = by_id.find(e.path);
        if (it == by_id.end()) throw DataError("no encoding line for '" + e.path + "'");
        ImageFacts f;
        f.face_count = it->second->faces;
        f.encoding = it->second->vector;
        facts.push_back(std::move(f));
    }
    return facts;
}

Report run_eval_pipeline(std::span<const ManifestEntry> entries, const std::string& base_dir,
                         const CascadeModel& model, const EmbeddingProvider& provider, const PipelineEvalConfig& cfg) {
    const auto facts = compute_image_facts(entries, base_dir, model, provider, cfg.pipeline, cfg.jobs);
    Report r = evaluate_pairs(entries, facts, cfg.eval);
    r.mode = "pipeline";
    r.provider = provider.id();
    return r;
}

Report run_eval_precomputed(std::span<const ManifestEntry> entries, std::span<const EncodingLine> lines,
                            const EvalOptions& options) {
    const auto facts = facts_from_encodings(entries, lines);
    Report r = evaluate_pairs(entries, facts, options);
    r.mode = "precomputed";
    r.provider = lines.empty() ? std::string() : lines.front().provider;
    return r;
}

namespace {

json counts_json(const ConfusionCounts& c) {
    return json{{"tp", c.tp}, {"fp", c.fp}, {"tn", c.tn}, {"fn", c.fn}};
}

json metrics_json(const std::optional<MetricRow>& m) {
    if (!m) return nullptr;
    json j{{"accuracy", m->accuracy}, {"precision", m->precision}, {"recall", m->recall}, {"f1", m->f1}};
    json undefined = json::array();
    if (m->precision_undefined) undefined.push_back("precision");
    if (m->recall_undefined) undefined.push_back("recall");
    if (m->f1_undefined) undefined.push_back("f1");
    j["undefined"] = undefined;
    return j;
}

template <class T>
json opt(const std::optional<T>& v) {
    if (!v) return nullptr;
    return json(*v);
}

}  // namespace

std::string report_json(const Report& r, bool pretty) {
    json doc;
    doc["schema"] = 1;
    doc["mode"] = r.mode;
    doc["provider"] = r.provider;
    doc["config"] = {
        {"d_max", r.options.matcher.d_max},
        {"threshold_pct", r.options.matcher.threshold_pct},
        {"skip_clean_nonface_pairs", r.options.rules.skip_clean_nonface_pairs},
        {"total_score_rounding",
         r.options.rounding == TotalScoreRounding::RoundedComponents ? "rounded-components" : "raw-mean"},
    };
    doc["images"] = r.images;
    doc["comparisons"] = r.records.size();
    doc["errored"] = r.errored;
    doc["skipped"] = r.skipped;
    doc["detection"] = {{"counts", counts_json(r.detection)}, {"metrics", metrics_json(r.detection_metrics)}};
    doc["matching"] = {{"counts", counts_json(r.matching)}, {"metrics", metrics_json(r.matching_metrics)}};
    doc["total_score"] = metrics_json(r.total);

    json records = json::array();
    for (const auto& rec : r.records) {
        json j;
        j["probe"] = rec.probe;
        j["gallery"] = rec.gallery;
        if (rec.error) {
            j["detection"] = nullptr;
            j["detection_cell"] = nullptr;
        } else {
            j["detection"] = std::string(to_string(rec.outcome));
            j["detection_cell"] = std::string(to_string(*rec.detection_cell));
        }
        j["d_face"] = opt(rec.d_face);
        j["similarity_pct"] = opt(rec.similarity_pct);
        j["predicted_match"] = opt(rec.predicted_match);
        j["truth_match"] = rec.truth_match;
        if (rec.matching_cell) {
            j["matching_cell"] = std::string(to_string(*rec.matching_cell));
        } else {
            j["matching_cell"] = rec.skipped ? json("skip") : json(nullptr);
        }
        j["error"] = opt(rec.error);
        records.push_back(std::move(j));
    }
    doc["records"] = std::move(records);
    return doc.dump(pretty ? 2 : -1) + "\n";
}

std::string report_csv(const Report& r) {
    std::ostringstream out;
    out << "schema,row,tp,fp,tn,fn,accuracy,precision,recall,f1\n";
    auto row = [&](const char* name, const ConfusionCounts* c, const std::optional<MetricRow>& m) {
        out << "1," << name << ',';
        if (c != nullptr) {
            out << c->tp << ',' << c->fp << ',' << c->tn << ',' << c->fn << ',';
        } else {
            out << ",,,,";
        }
        if (m) {
            out << format_pct2(m->accuracy) << ',' << format_pct2(m->precision) << ',' << format_pct2(m->recall) << ','
                << format_pct2(m->f1);
        } else {
            out << ",,,";
        }
        out << '\n';
    };
    row("matching", &r.matching, r.matching_metrics);
    row("detection", &r.detection, r.detection_metrics);
    row("total", nullptr, r.total);
    return out.str();
}

}  // namespace facegate
