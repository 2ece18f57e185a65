#pragma once

#include <stdexcept>
#include <string>

namespace relseg {

// Error categories map 1:1 onto CLI exit codes.
enum class ErrorKind : int {
    Config = 2,    // bad flags, malformed config, invalid operating point
    Data = 3,      // missing/corrupt files, shape mismatches in supplied data
    Invariant = 4, // internal invariant or gradcheck failure
};

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& msg)
        : std::runtime_error(msg), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }
    int exit_code() const noexcept { return static_cast<int>(kind_); }

private:
    ErrorKind kind_;
};

[[noreturn]] inline void config_error(const std::string& msg) {
    throw Error(ErrorKind::Config, msg);
}
[[noreturn]] inline void data_error(const std::string& msg) {
    throw Error(ErrorKind::Data, msg);
}
[[noreturn]] inline void invariant_error(const std::string& msg) {
    throw Error(ErrorKind::Invariant, msg);
}

} // namespace relseg
