#include "facegate/error.hpp"

namespace facegate {

std::string_view to_string(ParseErrorKind kind) {
    switch (kind) {
        case ParseErrorKind::BadMagic: return "bad-magic";
        case ParseErrorKind::MalformedHeader: return "malformed-header";
        case ParseErrorKind::UnsupportedMaxval: return "unsupported-maxval";
        case ParseErrorKind::TruncatedPayload: return "truncated-payload";
        case ParseErrorKind::MalformedXml: return "malformed-xml";
        case ParseErrorKind::MissingElement: return "missing-element";
        case ParseErrorKind::InvalidValue: return "invalid-value";
        case ParseErrorKind::RectOutsideWindow: return "rect-outside-window";
        case ParseErrorKind::NonStumpTree: return "non-stump-tree";
        case ParseErrorKind::UnsupportedFormat: return "unsupported-format";
        case ParseErrorKind::MalformedRow: return "malformed-row";
        case ParseErrorKind::DuplicateEntry: return "duplicate-entry";
        case ParseErrorKind::InconsistentEntry: return "inconsistent-entry";
    }
    return "unknown";
}

ParseError::ParseError(ParseErrorKind kind, std::size_t offset, const std::string& message)
    : Error(std::string(to_string(kind)) + " at " + std::to_string(offset) + ": " + message),
      kind_(kind),
      offset_(offset) {}

}  // namespace facegate
