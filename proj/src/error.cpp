#include "chimera/error.hpp"

namespace chimera {

const char* to_string(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::InvalidArgument: return "invalid-argument";
        case ErrorKind::Shape: return "shape-error";
        case ErrorKind::Conflict: return "conflict-error";
        case ErrorKind::NotFound: return "not-found";
        case ErrorKind::Format: return "format-error";
        case ErrorKind::Corruption: return "corruption-error";
        case ErrorKind::Parse: return "parse-error";
        case ErrorKind::Io: return "io-error";
        case ErrorKind::Numerical: return "numerical-error";
        case ErrorKind::Backend: return "backend-error";
    }
    return "unknown-error";
}

}  // namespace chimera
