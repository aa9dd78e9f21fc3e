#include "facegate/enhanced.hpp"

#include "facegate/error.hpp"

#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <stdexcept>

namespace facegate {

std::string SweepStep::label() const {
    char buf[48];
    std::snprintf(buf, sizeof buf, "%.2f/%d", scale_factor, min_neighbors);
    return buf;
}

SweepSchedule::SweepSchedule(std::vector<SweepStep> steps) : steps_(std::move(steps)) {
    if (steps_.empty()) throw std::invalid_argument("sweep schedule must not be empty");
    for (std::size_t i = 0; i < steps_.size(); ++i) {
        const auto& s = steps_[i];
        if (!(s.scale_factor > 1.0)) throw std::invalid_argument("sweep step " + s.label() + ": scaleFactor must be > 1");
        if (s.min_neighbors < 0) throw std::invalid_argument("sweep step " + s.label() + ": minNeighbors must be >= 0");
        if (i > 0) {
            const auto& prev = steps_[i - 1];
            if (!(s.scale_factor < prev.scale_factor)) {
                throw std::invalid_argument("sweep scaleFactor must strictly decrease (" + prev.label() + " -> " +
                                            s.label() + ")");
            }
            if (s.min_neighbors > prev.min_neighbors) {
                throw std::invalid_argument("sweep minNeighbors must not increase (" + prev.label() + " -> " +
                                            s.label() + ")");
            }
        }
    }
}

SweepSchedule SweepSchedule::parse(std::string_view spec) {
    auto trim = [](std::string_view s) {
        while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
        while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
        return s;
    };
    std::vector<SweepStep> steps;
    while (!spec.empty()) {
        const auto comma = spec.find(',');
        const auto item = trim(spec.substr(0, comma));
        spec = comma == std::string_view::npos ? std::string_view{} : spec.substr(comma + 1);
        const auto slash = item.find('/');
        if (slash == std::string_view::npos) {
            throw std::invalid_argument("schedule step '" + std::string(item) + "' must look like 1.10/10");
        }
        const auto sf = trim(item.substr(0, slash));
        const auto mn = trim(item.substr(slash + 1));
        SweepStep step;
        const auto r1 = std::from_chars(sf.data(), sf.data() + sf.size(), step.scale_factor);
        const auto r2 = std::from_chars(mn.data(), mn.data() + mn.size(), step.min_neighbors);
        if (r1.ec != std::errc() || r1.ptr != sf.data() + sf.size() || r2.ec != std::errc() ||
            r2.ptr != mn.data() + mn.size()) {
            throw std::invalid_argument("schedule step '" + std::string(item) + "' is not numeric");
        }
        steps.push_back(step);
    }
    return SweepSchedule(std::move(steps));
}

std::string SweepSchedule::to_string() const {
    std::string out;
    for (const auto& s : steps_) {
        if (!out.empty()) out += ',';
        out += s.label();
    }
    return out;
}

SweepSchedule default_schedule() {
    std::vector<SweepStep> steps;
    for (int k = 0; k < 10; ++k) {
        steps.push_back({(110 - k) / 100.0, 10 - k});
    }
    return SweepSchedule(std::move(steps));
}

void SelectionPolicy::validate() const {
    if (!(center_radius_fraction > 0.0 && center_radius_fraction <= 1.0)) {
        throw std::invalid_argument("center radius fraction must be in (0, 1]");
    }
}

double distance_to_center(const Rect& r, int img_w, int img_h) {
    const double dx = (r.x + r.w / 2.0) - img_w / 2.0;
    const double dy = (r.y + r.h / 2.0) - img_h / 2.0;
    return std::sqrt(dx * dx + dy * dy);
}

namespace {

bool row_major_before(const Rect& a, const Rect& b) {
    if (a.y != b.y) return a.y < b.y;
    if (a.x != b.x) return a.x < b.x;
    if (a.w != b.w) return a.w < b.w;
    return a.h < b.h;
}

}  // namespace

std::optional<SelectedFace> select_face(std::span<const Detection> dets, int img_w, int img_h,
                                        const SelectionPolicy& policy) {
    policy.validate();
    if (dets.empty()) return std::nullopt;

    const double radius = policy.center_radius_fraction * std::sqrt(static_cast<double>(img_w) * img_w +
                                                                    static_cast<double>(img_h) * img_h);
    const Detection* best_inside = nullptr;
    double best_inside_d = 0.0;
    const Detection* nearest = nullptr;
    double nearest_d = 0.0;

    for (const auto& det : dets) {
        const double d = distance_to_center(det.rect, img_w, img_h);
        if (d <= radius) {
            const bool better = best_inside == nullptr || det.rect.area() > best_inside->rect.area() ||
                                (det.rect.area() == best_inside->rect.area() &&
                                 (d < best_inside_d || (d == best_inside_d && row_major_before(det.rect, best_inside->rect))));
            if (better) {
                best_inside = &det;
                best_inside_d = d;
            }
        }
        const bool nearer = nearest == nullptr || d < nearest_d ||
                            (d == nearest_d && (det.rect.area() > nearest->rect.area() ||
                                                (det.rect.area() == nearest->rect.area() &&
                                                 row_major_before(det.rect, nearest->rect))));
        if (nearer) {
            nearest = &det;
            nearest_d = d;
        }
    }

    SelectedFace out;
    if (best_inside != nullptr) {
        out.rect = best_inside->rect;
        out.dist_to_center = best_inside_d;
    } else {
        out.rect = nearest->rect;
        out.dist_to_center = nearest_d;
    }
    out.candidates_at_stop = dets.size();
    return out;
}

EnhancedResult detect_enhanced(const CascadeModel& model, const IntegralImage& ii, const EnhancedOptions& options,
                               const PassObserver& observer) {
    options.policy.validate();
    EnhancedResult result;
    for (std::size_t i = 0; i < options.schedule.size(); ++i) {
        const auto& step = options.schedule[i];
        DetectParams params;
        params.scale_factor = step.scale_factor;
        params.min_neighbors = step.min_neighbors;
        params.min_size = options.min_size;
        params.group_eps = options.group_eps;
        params.threads = options.threads;

        auto dets = detect_multiscale(model, ii, params);
        ++result.passes_run;
        if (observer) observer(i, step, dets);
        if (dets.empty()) continue;

        result.face = select_face(dets, ii.width(), ii.height(), options.policy);
        result.face->used_params = step;
        result.stopping_detections = std::move(dets);
        result.stopping_step = i;
        break;
    }
    return result;
}

EnhancedResult detect_enhanced(const CascadeModel& model, const GrayImage& img, const EnhancedOptions& options,
                               const PassObserver& observer) {
    return detect_enhanced(model, IntegralImage(img), options, observer);
}

}  // namespace facegate
