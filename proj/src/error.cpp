#include "umml/error.hpp"

namespace umml {

const char *to_string(ErrorKind kind) {
    switch (kind) {
    case ErrorKind::Input: return "input";
    case ErrorKind::Format: return "format";
    case ErrorKind::Numeric: return "numeric";
    case ErrorKind::Config: return "config";
    case ErrorKind::Io: return "io";
    }
    return "unknown";
}

}  // namespace umml
