#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <string_view>

namespace facegate {

/// Base class for every error raised by the engine.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Raised for bad input data that is not a parse problem (missing files,
/// inconsistent stores, out-of-range geometry).
class DataError : public Error {
public:
    using Error::Error;
};

enum class ParseErrorKind {
    // Netpbm
    BadMagic,
    MalformedHeader,
    UnsupportedMaxval,
    TruncatedPayload,
    // Cascade XML
    MalformedXml,
    MissingElement,
    InvalidValue,
    RectOutsideWindow,
    NonStumpTree,
    UnsupportedFormat,
    // Manifest / encodings / store
    MalformedRow,
    DuplicateEntry,
    InconsistentEntry,
};

std::string_view to_string(ParseErrorKind kind);

/// A located parse failure. `offset()` is a byte offset for binary and XML
/// inputs and a 1-based line number for line-oriented text inputs.
class ParseError : public Error {
public:
    ParseError(ParseErrorKind kind, std::size_t offset, const std::string& message);

    ParseErrorKind kind() const noexcept { return kind_; }
    std::size_t offset() const noexcept { return offset_; }

private:
    ParseErrorKind kind_;
    std::size_t offset_;
};

}  // namespace facegate
