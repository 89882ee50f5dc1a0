#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace deblur {

enum class ErrorKind {
    InvalidArgument,
    DimensionMismatch,
    Io,
    Format,
    Numeric,
    Training,
};

std::string_view to_string(ErrorKind kind) noexcept;

// Single exception type for the library. The kind lets the CLI print a
// machine-parsable tag without string matching on messages.
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

inline void require(bool condition, ErrorKind kind, const std::string& message) {
    if (!condition) {
        fail(kind, message);
    }
}

inline void require(bool condition, ErrorKind kind, const char* message) {
    if (!condition) {
        fail(kind, message);
    }
}

}  // namespace deblur
