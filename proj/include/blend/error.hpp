#pragma once

#include <stdexcept>
#include <string>

namespace blend {

enum class ErrorKind {
    invalid_parameter,
    invalid_input,
    shape,
    invalid_checkpoint,
    partition,
    access_violation,
    alignment,
    io,
    invariant,
};

const char* to_string(ErrorKind kind);

/// All library failures surface as this exception. The kind decides the CLI
/// exit code: invariant violations exit 3, everything else exits 2.
class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what)
        : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }
    int exit_code() const noexcept { return kind_ == ErrorKind::invariant ? 3 : 2; }

private:
    ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) { throw Error(kind, what); }

inline void require(bool cond, ErrorKind kind, const std::string& what)
{
    if (!cond)
        fail(kind, what);
}

} // namespace blend
