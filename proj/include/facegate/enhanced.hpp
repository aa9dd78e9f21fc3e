#pragma once

#include "facegate/detector.hpp"

#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace facegate {

struct SweepStep {
    double scale_factor = 1.1;
    int min_neighbors = 10;

    /// "1.10/10"
    std::string label() const;
    friend bool operator==(const SweepStep&, const SweepStep&) = default;
};

/// Ordered detector settings tried from strictest to most relaxed.
/// Invariants: non-empty, every scaleFactor > 1, scaleFactor strictly
/// decreasing, minNeighbors non-increasing and >= 0.
class SweepSchedule {
public:
    explicit SweepSchedule(std::vector<SweepStep> steps);

    /// Parses "1.10/10,1.09/9,..." (whitespace tolerated around tokens).
    static SweepSchedule parse(std::string_view spec);

    std::span<const SweepStep> steps() const noexcept { return steps_; }
    std::size_t size() const noexcept { return steps_.size(); }
    const SweepStep& operator[](std::size_t i) const { return steps_[i]; }
    std::string to_string() const;

private:
    std::vector<SweepStep> steps_;
};

/// (1.10, 10), (1.09, 9), ..., (1.01, 1).
SweepSchedule default_schedule();

struct SelectionPolicy {
    /// Radius of the "near the centre" disc as a fraction of the image diagonal.
    double center_radius_fraction = 0.25;
    void validate() const;
};

struct SelectedFace {
    Rect rect;
    double dist_to_center = 0.0;
    SweepStep used_params;
    std::size_t candidates_at_stop = 0;
};

double distance_to_center(const Rect& r, int img_w, int img_h);

/// Largest detection whose centre lies within the policy radius of the image
/// centre (ties: nearer, then row-major). If none is inside the disc, the
/// detection nearest the centre (ties: larger, then row-major). `used_params`
/// is left default; `candidates_at_stop` is dets.size().
std::optional<SelectedFace> select_face(std::span<const Detection> dets, int img_w, int img_h,
                                        const SelectionPolicy& policy = {});

struct EnhancedResult {
    std::optional<SelectedFace> face;
    /// Grouped detections of the pass that stopped the sweep (empty if none).
    std::vector<Detection> stopping_detections;
    std::optional<std::size_t> stopping_step;
    std::size_t passes_run = 0;
};

/// Called after every pass with its index, settings and detections.
using PassObserver = std::function<void(std::size_t, const SweepStep&, std::span<const Detection>)>;

struct EnhancedOptions {
    SweepSchedule schedule = default_schedule();
    SelectionPolicy policy;
    Size min_size{30, 30};
    double group_eps = 0.2;
    int threads = 1;
};

/// Runs the schedule in order and stops at the first pass with at least one
/// detection; that pass's detections go through `select_face`.
EnhancedResult detect_enhanced(const CascadeModel& model, const GrayImage& img, const EnhancedOptions& options,
                               const PassObserver& observer = {});
EnhancedResult detect_enhanced(const CascadeModel& model, const IntegralImage& ii, const EnhancedOptions& options,
                               const PassObserver& observer = {});

}  // namespace facegate
