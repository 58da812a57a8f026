#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace refpaint {

enum class ErrorKind {
    parameter,
    shape,
    generation,
    configuration,
    checkpoint,
    degenerate_input,
    training,
    io,
};

std::string_view to_string(ErrorKind kind) noexcept;

/// Single exception type for the library; `kind()` tells callers what failed.
class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& message)
        : std::runtime_error(message), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

[[noreturn]] void raise(ErrorKind kind, const std::string& message);

inline void require(bool condition, ErrorKind kind, const std::string& message) {
    if (!condition) {
        raise(kind, message);
    }
}

}  // namespace refpaint
