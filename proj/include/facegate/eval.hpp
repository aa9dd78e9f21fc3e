#pragma once

#include "facegate/cascade.hpp"
#include "facegate/encoding.hpp"

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace facegate {

struct ManifestEntry {
    std::string path;
    /// Identity; empty exactly when has_face is false.
    std::string label;
    bool has_face = false;

    friend bool operator==(const ManifestEntry&, const ManifestEntry&) = default;
};

/// Parses a `path,label,has_face` CSV. Errors carry the 1-based line number.
std::vector<ManifestEntry> load_manifest(std::string_view csv);
std::vector<ManifestEntry> load_manifest_file(const std::string& path);

struct PairIndex {
    std::size_t probe;
    std::size_t gallery;
    friend bool operator==(const PairIndex&, const PairIndex&) = default;
};

/// Every ordered pair of distinct entries, ordered by (probe path, gallery
/// path). Indices refer to `entries`. Throws std::invalid_argument for fewer
/// than two entries.
std::vector<PairIndex> pair_plan(std::span<const ManifestEntry> entries);

enum class Cell { TP, FP, TN, FN };
std::string_view to_string(Cell c);

enum class DetectionOutcome { ExactlyOne, Multiple, NoneOnFace, NoneOnNonface, FoundOnNonface };
std::string_view to_string(DetectionOutcome o);

DetectionOutcome detection_outcome(bool has_face, std::size_t count);

/// Face image: 1 -> TP, >1 -> FP, 0 -> FN. Non-face image: 0 -> TN, >=1 -> FP.
Cell classify_detection(bool has_face, std::size_t count);

struct MatchingRules {
    /// Leave pairs of two undetected non-face images out of the matching counts.
    bool skip_clean_nonface_pairs = true;
};

/// Facts about one pair needed to place it in the matching confusion matrix.
struct PairFacts {
    bool truth_match = false;
    /// Absent when either image has no usable encoding.
    std::optional<bool> predicted_match;
    /// A face image in the pair produced no detection.
    bool face_undetected = false;
    /// Both images are non-face and neither produced a detection.
    bool clean_nonface_pair = false;
};

/// std::nullopt means the pair is skipped.
std::optional<Cell> classify_matching(const PairFacts& facts, const MatchingRules& rules = {});

struct ConfusionCounts {
    std::uint64_t tp = 0;
    std::uint64_t fp = 0;
    std::uint64_t tn = 0;
    std::uint64_t fn = 0;

    void add(Cell c) noexcept;
    std::uint64_t total() const noexcept { return tp + fp + tn + fn; }
    friend bool operator==(const ConfusionCounts&, const ConfusionCounts&) = default;
};

/// Percentages. A ratio whose denominator is zero is reported as 0 and flagged.
struct MetricRow {
    double accuracy = 0.0;
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    bool precision_undefined = false;
    bool recall_undefined = false;
    bool f1_undefined = false;
};

/// Throws std::invalid_argument when every count is zero.
MetricRow metrics(const ConfusionCounts& c);

enum class TotalScoreRounding {
    /// Each row's metric is rounded to two decimals before averaging.
    RoundedComponents,
    /// Plain mean of the unrounded metrics.
    RawMean,
};

/// Per-metric mean of the matching and detection rows.
MetricRow total_score(const MetricRow& matching, const MetricRow& detection,
                      TotalScoreRounding rounding = TotalScoreRounding::RoundedComponents);

/// Round half up to two decimals, tolerant of binary representation error
/// (72.225 prints as "72.23").
std::string format_pct2(double v);
long long hundredths_half_up(double v);

/// What the harness knows about one image after detection and encoding.
struct ImageFacts {
    /// Grouped detections in the stopping pass (or the single baseline pass).
    std::size_t face_count = 0;
    std::optional<FaceEncoding> encoding;
    /// Set when the image could not be processed; every pair with it errors.
    std::optional<std::string> error;
};

struct ComparisonRecord {
    std::string probe;
    std::string gallery;
    DetectionOutcome outcome = DetectionOutcome::NoneOnNonface;
    std::optional<Cell> detection_cell;
    std::optional<double> d_face;
    std::optional<double> similarity_pct;
    std::optional<bool> predicted_match;
    bool truth_match = false;
    /// Absent for skipped and errored pairs.
    std::optional<Cell> matching_cell;
    bool skipped = false;
    std::optional<std::string> error;
};

struct EvalOptions {
    MatcherConfig matcher;
    MatchingRules rules;
    TotalScoreRounding rounding = TotalScoreRounding::RoundedComponents;
};

struct Report {
    std::string mode;
    std::string provider;
    std::size_t images = 0;
    std::vector<ComparisonRecord> records;
    ConfusionCounts detection;
    ConfusionCounts matching;
    std::size_t skipped = 0;
    std::size_t errored = 0;
    std::optional<MetricRow> detection_metrics;
    std::optional<MetricRow> matching_metrics;
    std::optional<MetricRow> total;
    EvalOptions options;
};

/// Pair stage: consumes per-image facts (index-aligned with `entries`).
Report evaluate_pairs(std::span<const ManifestEntry> entries, std::span<const ImageFacts> facts,
                      const EvalOptions& options);

/// One line of a precomputed encodings file.
struct EncodingLine {
    std::string id;
    std::string provider;
    std::optional<FaceEncoding> vector;
    std::size_t faces = 0;
};

/// JSON lines `{"id", "provider", "vector": [128] | null, "faces"?}`. When
/// `faces` is absent it is 1 for a vector and 0 for null. All lines must
/// share one provider; ids must be unique.
std::vector<EncodingLine> load_encodings(std::string_view jsonl);
std::vector<EncodingLine> load_encodings_file(const std::string& path);
std::string encoding_line_json(const EncodingLine& line);

struct PipelineEvalConfig {
    PipelineConfig pipeline;
    EvalOptions eval;
    /// Worker threads for the per-image stage; results do not depend on it.
    int jobs = 1;
};

/// Per-image stage for pipeline mode: image paths are resolved against
/// `base_dir`. Each image is decoded, detected and encoded exactly once.
std::vector<ImageFacts> compute_image_facts(std::span<const ManifestEntry> entries, const std::string& base_dir,
                                            const CascadeModel& model, const EmbeddingProvider& provider,
                                            const PipelineConfig& pipeline, int jobs = 1);

/// Per-image stage for precomputed mode. Throws DataError if an entry has no line.
std::vector<ImageFacts> facts_from_encodings(std::span<const ManifestEntry> entries,
                                             std::span<const EncodingLine> lines);

Report run_eval_pipeline(std::span<const ManifestEntry> entries, const std::string& base_dir,
                         const CascadeModel& model, const EmbeddingProvider& provider, const PipelineEvalConfig& cfg);

Report run_eval_precomputed(std::span<const ManifestEntry> entries, std::span<const EncodingLine> lines,
                            const EvalOptions& options);

/// Full report (schema 1) with every comparison record.
std::string report_json(const Report& r, bool pretty = false);
/// Counts and metrics, percentages at two decimals.
std::string report_csv(const Report& r);

}  // namespace facegate
