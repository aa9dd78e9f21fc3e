#pragma once

#include "facegate/enhanced.hpp"
#include "facegate/image.hpp"

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>

namespace facegate {

inline constexpr std::size_t kEncodingDims = 128;

/// 128 finite reals describing one face.
class FaceEncoding {
public:
    /// Throws std::invalid_argument unless `values` holds exactly 128 finite numbers.
    explicit FaceEncoding(std::span<const double> values);

    std::span<const double, kEncodingDims> values() const noexcept { return values_; }
    double operator[](std::size_t i) const { return values_[i]; }

    friend bool operator==(const FaceEncoding&, const FaceEncoding&) = default;

private:
    std::array<double, kEncodingDims> values_{};
};

struct MatcherConfig {
    /// Distance mapped to the low end of the similarity scale.
    double d_max = 1.0;
    double threshold_pct = 75.0;
    double clamp_low = 0.0;
    double clamp_high = 100.0;

    void validate() const;
};

struct MatchResult {
    double d_face = 0.0;
    double similarity_pct = 0.0;
    bool is_match = false;
};

/// Square root of the summed squared differences, accumulated in index order.
double euclidean_distance(const FaceEncoding& a, const FaceEncoding& b);

/// (1 - d/dMax) * 100 + 25, clamped to [clamp_low, clamp_high].
///
/// The raw mapping is 125 at d = 0 and 25 at d = dMax; the clamp is what
/// makes identical encodings read as exactly 100%. A distance of dMax does
/// not reach 0% (that takes d = 1.25 * dMax).
double similarity_pct(double d_face, const MatcherConfig& cfg = {});

/// With the default config this matches exactly when d_face <= 0.5.
MatchResult match(const FaceEncoding& a, const FaceEncoding& b, const MatcherConfig& cfg = {});

/// Source of face encodings. Implementations must be deterministic and safe
/// to call from several threads at once.
class EmbeddingProvider {
public:
    virtual ~EmbeddingProvider() = default;
    /// Name and version, recorded in every output ("reference-v1").
    virtual std::string id() const = 0;
    virtual FaceEncoding embed(const RgbImage& crop) const = 0;
};

/// Deterministic stand-in for a learned face embedder: nearest-neighbour
/// resize to 32x32, channel values scaled to [0, 1], a fixed 128 x 3072
/// random projection, L2 normalisation. It does not tell real faces apart.
class ReferenceEmbedder final : public EmbeddingProvider {
public:
    static constexpr const char* kId = "reference-v1";
    std::string id() const override { return kId; }
    FaceEncoding embed(const RgbImage& crop) const override;
};

FaceEncoding reference_embed(const RgbImage& crop);

/// xorshift64* generator used for the projection matrix.
class XorShift64Star {
public:
    explicit XorShift64Star(std::uint64_t seed) : state_(seed) {}
    std::uint64_t next() noexcept {
        state_ ^= state_ >> 12;
        state_ ^= state_ << 25;
        state_ ^= state_ >> 27;
        return state_ * 0x2545F4914F6CDD1DULL;
    }
    /// Uniform in [-1, 1): top 53 bits scaled to [0, 1), then 2u - 1.
    double next_signed_unit() noexcept {
        return static_cast<double>(next() >> 11) * 0x1.0p-53 * 2.0 - 1.0;
    }

private:
    std::uint64_t state_;
};

inline constexpr std::uint64_t kProjectionSeed = 0x9E3779B97F4A7C15ULL;
inline constexpr int kEmbedSide = 32;

enum class CropSource {
    /// Crop the grayscale frame after expanding it back to three channels.
    GrayToRgb,
    /// Crop the original color frame.
    OriginalColor,
};

enum class DetectorMode {
    Enhanced,
    /// One detect_multiscale pass; the largest detection is used.
    Baseline,
};

struct PipelineConfig {
    DetectorMode mode = DetectorMode::Enhanced;
    EnhancedOptions enhanced;
    DetectParams baseline;
    CropSource crop_source = CropSource::GrayToRgb;
};

struct PipelineResult {
    EnhancedResult detection;
    std::optional<FaceEncoding> encoding;

    bool has_face() const noexcept { return encoding.has_value(); }
};

/// Baseline detection expressed in the same result shape as the sweep.
EnhancedResult detect_baseline(const CascadeModel& model, const GrayImage& gray, const DetectParams& params);

/// grayscale -> detect -> crop (from gray-as-RGB or the color frame) -> embed.
PipelineResult encode_pipeline(const CascadeModel& model, const RgbImage& img, const EmbeddingProvider& provider,
                               const PipelineConfig& cfg = {});

}  // namespace facegate
