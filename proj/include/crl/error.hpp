#pragma once

#include <stdexcept>
#include <string>

namespace crl {

// Categories map onto CLI exit codes (config errors -> 2, runtime precondition
// failures -> 3).
enum class ErrorKind {
    InvalidArgument,
    DegenerateClass,
    DebiasUndefined,
    EmptyFamily,
    CapExceeded,
    Overflow,
    Io,
    Config,
};

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what)
        : std::runtime_error(what), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

const char* to_string(ErrorKind kind) noexcept;

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) {
    throw Error(kind, what);
}

inline void require(bool ok, ErrorKind kind, const char* what) {
    if (!ok) fail(kind, what);
}

inline void require(bool ok, ErrorKind kind, const std::string& what) {
    if (!ok) fail(kind, what);
}

}  // namespace crl
