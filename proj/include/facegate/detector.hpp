#pragma once

#include "facegate/cascade.hpp"
#include "facegate/image.hpp"

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

namespace facegate {

/// Summed-area tables of size (width+1) x (height+1). Entry (x, y) holds the
/// sum over all pixels strictly above and to the left of (x, y), so row 0 and
/// column 0 are zero.
class IntegralImage {
public:
    explicit IntegralImage(const GrayImage& img);

    int width() const noexcept { return width_; }
    int height() const noexcept { return height_; }
    std::size_t stride() const noexcept { return static_cast<std::size_t>(width_) + 1; }

    std::int64_t sum_at(int x, int y) const { return sum_[static_cast<std::size_t>(y) * stride() + x]; }
    std::int64_t sqsum_at(int x, int y) const { return sqsum_[static_cast<std::size_t>(y) * stride() + x]; }

    std::int64_t rect_sum(const Rect& r) const;
    std::int64_t rect_sqsum(const Rect& r) const;

    std::span<const std::int64_t> sum_table() const noexcept { return sum_; }
    /// The sum table reduced modulo 2^32. Differences taken in unsigned
    /// arithmetic give exact rect sums whenever the true sum is below 2^32,
    /// which holds for every rect of an 8-bit image up to 4096x4096.
    std::span<const std::uint32_t> sum_table_mod32() const noexcept { return sum32_; }
    std::span<const std::int64_t> sqsum_table() const noexcept { return sqsum_; }

private:
    int width_;
    int height_;
    std::vector<std::int64_t> sum_;
    std::vector<std::int64_t> sqsum_;
    std::vector<std::uint32_t> sum32_;
};

inline IntegralImage integral(const GrayImage& img) { return IntegralImage(img); }

struct DetectParams {
    double scale_factor = 1.1;
    int min_neighbors = 3;
    /// Clamped up to the cascade window.
    Size min_size{30, 30};
    /// Similarity tolerance used when grouping raw candidates.
    double group_eps = 0.2;
    /// Worker threads for the scale loop; output order does not depend on it.
    int threads = 1;
    /// Use the 4-wide AVX2 window kernel when the CPU has it. Both kernels
    /// perform the same per-window double arithmetic and agree exactly.
    bool allow_simd = true;

    void validate() const;
};

struct Detection {
    Rect rect;
    int neighbors = 0;
    friend bool operator==(const Detection&, const Detection&) = default;
};

/// Round half up, the rounding used for every scaled coordinate.
inline int round_half_up(double v) noexcept { return static_cast<int>(std::floor(v + 0.5)); }

/// Cascade with every feature rectangle pre-scaled to one window scale and
/// converted to offsets into an integral table of a given stride.
class ScaledCascade {
public:
    ScaledCascade(const CascadeModel& model, double scale, std::size_t stride);

    int window_w() const noexcept { return window_w_; }
    int window_h() const noexcept { return window_h_; }

    /// The window at (x, y) must fit inside the image; not checked here.
    bool accepts(const IntegralImage& ii, int x, int y) const;

    /// Evaluates the four windows at x, x+step, x+2*step, x+3*step on row y.
    /// Returns false (and leaves `out` untouched) when the SIMD kernel is
    /// unavailable for this CPU or image.
    bool accepts4(const IntegralImage& ii, int x, int y, int step, bool out[4]) const;

private:
    double window_std(const IntegralImage& ii, std::ptrdiff_t base) const;

    // Every node carries three terms; two-rect features get a zero-weight
    // third term whose four corners coincide, contributing exactly +0.0.
    struct Node {
        std::ptrdiff_t p[3][4];
        double weight[3];
        double threshold;
        /// {right leaf, left leaf}, indexed by (f < threshold * std).
        double leaf[2];
    };
    struct StageRange {
        std::uint32_t first_node;
        std::uint32_t node_count;
        double threshold;
    };

    int window_w_;
    int window_h_;
    std::size_t stride_;
    double area_;
    std::vector<Node> nodes_;
    std::vector<StageRange> stages_;
};

/// Scale a base-window rect: each coordinate rounded half up, then clipped so
/// it stays inside the scaled window.
Rect scale_feature_rect(const Rect& r, double scale, int scaled_w, int scaled_h);

/// Accept/reject for one window. Throws DataError if the scaled window does
/// not fit at (x, y).
bool eval_window(const CascadeModel& model, const IntegralImage& ii, int x, int y, double scale);

/// Scales visited by `scan`: s0 * F^k for k = 0, 1, ... while the rounded
/// window fits, where s0 = max(1, minSize / window).
std::vector<double> scan_scales(const CascadeModel& model, int img_w, int img_h, const DetectParams& params);

/// Every accepted window, ordered by ascending scale then row-major.
std::vector<Rect> scan(const CascadeModel& model, const IntegralImage& ii, const DetectParams& params);
std::vector<Rect> scan(const CascadeModel& model, const GrayImage& img, const DetectParams& params);

/// Partition candidates into classes of the transitive closure of the
/// similarity relation and keep classes with at least max(1, min_neighbors)
/// members; each class becomes its rounded mean rect. With min_neighbors == 0
/// every candidate is returned ungrouped. Classes are emitted in the order of
/// their first member.
std::vector<Detection> group_rects(std::span<const Rect> candidates, int min_neighbors, double eps = 0.2);

bool similar_rects(const Rect& a, const Rect& b, double eps);

/// scan + group, sorted by descending area then row-major position.
std::vector<Detection> detect_multiscale(const CascadeModel& model, const IntegralImage& ii, const DetectParams& params);
std::vector<Detection> detect_multiscale(const CascadeModel& model, const GrayImage& img, const DetectParams& params);

void sort_detections(std::vector<Detection>& dets);

}  // namespace facegate
