#include "facegate/encoding.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

namespace facegate {

FaceEncoding::FaceEncoding(std::span<const double> values) {
    if (values.size() != kEncodingDims) {
        throw std::invalid_argument("face encoding needs " + std::to_string(kEncodingDims) + " values, got " +
                                    std::to_string(values.size()));
    }
    for (std::size_t i = 0; i < kEncodingDims; ++i) {
        if (!std::isfinite(values[i])) {
            throw std::invalid_argument("face encoding value " + std::to_string(i) + " is not finite");
        }
        values_[i] = values[i];
    }
}

void MatcherConfig::validate() const {
    if (!(d_max > 0.0)) throw std::invalid_argument("dMax must be > 0");
    if (!(threshold_pct >= 0.0 && threshold_pct <= 100.0)) throw std::invalid_argument("threshold must be in [0, 100]");
    if (!(clamp_low <= clamp_high)) throw std::invalid_argument("clamp bounds are inverted");
}

double euclidean_distance(const FaceEncoding& a, const FaceEncoding& b) {
    double acc = 0.0;
    for (std::size_t i = 0; i < kEncodingDims; ++i) {
        const double d = a[i] - b[i];
        acc += d * d;
    }
    return std::sqrt(acc);
}

double similarity_pct(double d_face, const MatcherConfig& cfg) {
    if (!(d_face >= 0.0)) throw std::invalid_argument("distance must be non-negative");
    const double raw = (1.0 - d_face / cfg.d_max) * 100.0 + 25.0;
    return std::clamp(raw, cfg.clamp_low, cfg.clamp_high);
}

MatchResult match(const FaceEncoding& a, const FaceEncoding& b, const MatcherConfig& cfg) {
    cfg.validate();
    MatchResult r;
    r.d_face = euclidean_distance(a, b);
    r.similarity_pct = similarity_pct(r.d_face, cfg);
    r.is_match = r.similarity_pct >= cfg.threshold_pct;
    return r;
}

namespace {

constexpr std::size_t kInputDims = static_cast<std::size_t>(kEmbedSide) * kEmbedSide * 3;

const std::vector<double>& projection() {
    static const std::vector<double> matrix = [] {
        std::vector<double> m(kEncodingDims * kInputDims);
        XorShift64Star rng(kProjectionSeed);
        for (auto& v : m) v = rng.next_signed_unit();
        return m;
    }();
    return matrix;
}

}  // namespace

FaceEncoding reference_embed(const RgbImage& crop) {
    const RgbImage small = resize_nearest(crop, kEmbedSide, kEmbedSide);
    std::vector<double> input(kInputDims);
    const auto px = small.data();
    for (std::size_t i = 0; i < kInputDims; ++i) input[i] = px[i] / 255.0;

    const auto& m = projection();
    std::array<double, kEncodingDims> out{};
    for (std::size_t r = 0; r < kEncodingDims; ++r) {
        const double* row = m.data() + r * kInputDims;
        double acc = 0.0;
        for (std::size_t c = 0; c < kInputDims; ++c) acc += row[c] * input[c];
        out[r] = acc;
    }
    double norm_sq = 0.0;
    for (double v : out) norm_sq += v * v;
    if (norm_sq == 0.0) {
        // All-black crop projects to the origin; pin it to the first axis.
        out.fill(0.0);
        out[0] = 1.0;
    } else {
        const double norm = std::sqrt(norm_sq);
        for (double& v : out) v /= norm;
    }
    return FaceEncoding(out);
}

FaceEncoding ReferenceEmbedder::embed(const RgbImage& crop) const { return reference_embed(crop); }

EnhancedResult detect_baseline(const CascadeModel& model, const GrayImage& gray, const DetectParams& params) {
    EnhancedResult result;
    result.stopping_detections = detect_multiscale(model, gray, params);
    result.passes_run = 1;
    if (!result.stopping_detections.empty()) {
        // Detections are sorted largest first.
        const Rect& r = result.stopping_detections.front().rect;
        result.face = SelectedFace{r, distance_to_center(r, gray.width(), gray.height()),
                                   SweepStep{params.scale_factor, params.min_neighbors},
                                   result.stopping_detections.size()};
        result.stopping_step = 0;
    }
    return result;
}

PipelineResult encode_pipeline(const CascadeModel& model, const RgbImage& img, const EmbeddingProvider& provider,
                               const PipelineConfig& cfg) {
    const GrayImage gray = to_grayscale(img);
    PipelineResult out;
    out.detection = cfg.mode == DetectorMode::Enhanced ? detect_enhanced(model, gray, cfg.enhanced)
                                                       : detect_baseline(model, gray, cfg.baseline);
    if (!out.detection.face) return out;

    const Rect& r = out.detection.face->rect;
    const RgbImage face_crop =
        cfg.crop_source == CropSource::GrayToRgb ? crop(gray_to_rgb(gray), r) : crop(img, r);
    out.encoding = provider.embed(face_crop);
    return out;
}

}  // namespace facegate
