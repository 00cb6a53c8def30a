#pragma once

#include <stdexcept>
#include <string>

namespace umml {

// Broad failure classes. The CLI maps each to a distinct exit code.
enum class ErrorKind {
    Input = 2,     // bad user-supplied data or arguments
    Format = 3,    // malformed file contents
    Numeric = 4,   // non-finite values, failed convergence
    Config = 5,    // invalid run configuration
    Io = 6,        // unreadable or unwritable paths
};

const char *to_string(ErrorKind kind);

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string &what)
        : std::runtime_error(what), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string &what) {
    throw Error(kind, what);
}

}  // namespace umml
