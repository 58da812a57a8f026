#include "refpaint/error.hpp"

namespace refpaint {

std::string_view to_string(ErrorKind kind) noexcept {
    switch (kind) {
        case ErrorKind::parameter: return "parameter";
        case ErrorKind::shape: return "shape";
        case ErrorKind::generation: return "generation";
        case ErrorKind::configuration: return "configuration";
        case ErrorKind::checkpoint: return "checkpoint";
        case ErrorKind::degenerate_input: return "degenerate_input";
        case ErrorKind::training: return "training";
        case ErrorKind::io: return "io";
    }
    return "unknown";
}

void raise(ErrorKind kind, const std::string& message) {
    throw Error(kind, message);
}

}  // namespace refpaint
