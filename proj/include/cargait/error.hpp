#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace cargait {

enum class ErrorKind {
    io,
    format,
    truncated,
    duplicate_id,
    non_finite,
    shape,
    invalid_argument,
    empty_input,
    missing_feature,
    label_range,
};

inline std::string_view to_string(ErrorKind kind) {
    switch (kind) {
    case ErrorKind::io: return "io";
    case ErrorKind::format: return "format";
    case ErrorKind::truncated: return "truncated";
    case ErrorKind::duplicate_id: return "duplicate_id";
    case ErrorKind::non_finite: return "non_finite";
    case ErrorKind::shape: return "shape";
    case ErrorKind::invalid_argument: return "invalid_argument";
    case ErrorKind::empty_input: return "empty_input";
    case ErrorKind::missing_feature: return "missing_feature";
    case ErrorKind::label_range: return "label_range";
    }
    return "unknown";
}

/// Every failure raised by the library carries a kind so callers (and the CLI
/// exit-code table) can dispatch without parsing messages.
class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& message)
        : std::runtime_error(message), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& message) {
    throw Error(kind, message);
}

} // namespace cargait
