#pragma once

#include "facegate/image.hpp"

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace facegate {

/// One rectangle of a Haar feature, in base-window coordinates.
struct WeightedRect {
    Rect rect;
    double weight = 0.0;
    friend bool operator==(const WeightedRect&, const WeightedRect&) = default;
};

/// Two or three weighted rectangles.
struct HaarFeature {
    std::vector<WeightedRect> rects;
    friend bool operator==(const HaarFeature&, const HaarFeature&) = default;
};

/// Depth-1 tree: outputs `left_leaf` when the normalized feature value is
/// below `threshold * std`, otherwise `right_leaf`.
struct WeakStump {
    std::size_t feature = 0;
    double threshold = 0.0;
    double left_leaf = 0.0;
    double right_leaf = 0.0;
    friend bool operator==(const WeakStump&, const WeakStump&) = default;
};

struct Stage {
    double threshold = 0.0;
    std::vector<WeakStump> stumps;
    friend bool operator==(const Stage&, const Stage&) = default;
};

/// Immutable once parsed; safe to share between threads.
struct CascadeModel {
    int window_w = 0;
    int window_h = 0;
    std::vector<HaarFeature> features;
    std::vector<Stage> stages;

    std::size_t stump_count() const;
    friend bool operator==(const CascadeModel&, const CascadeModel&) = default;
};

/// Parses the stump-based cascade XML schema shipped with mainstream CV
/// tooling. Accepts either `<width>`/`<height>` or `<size>W H</size>` for the
/// base window. Rejects old-style (`opencv-haar-classifier`) files, tilted
/// features, multi-node trees and rects that leave the window. Every failure
/// is a ParseError carrying the byte offset of the offending element.
CascadeModel parse_cascade_xml(std::string_view xml);

CascadeModel load_cascade_file(const std::string& path);

/// Throws DataError if the model violates any structural invariant.
void validate(const CascadeModel& model);

/// Canonical XML dump in the same schema; `parse_cascade_xml` reads it back
/// into an identical model (doubles are written with round-trip precision).
std::string to_cascade_xml(const CascadeModel& model);

}  // namespace facegate
