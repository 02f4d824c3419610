#pragma once

#include <stdexcept>
#include <string>

namespace cashewmap {

/// Base class for all library errors. The exit code is what the CLI returns
/// when the error escapes a command.
class Error : public std::runtime_error {
public:
    Error(const std::string& what, int exit_code) : std::runtime_error(what), exit_code_(exit_code) {}
    int exit_code() const noexcept { return exit_code_; }

private:
    int exit_code_;
};

/// Invalid or inconsistent configuration (exit code 2).
class ConfigError : public Error {
public:
    explicit ConfigError(const std::string& what) : Error(what, 2) {}
};

/// Missing, malformed or mismatched input data (exit code 3).
class DataError : public Error {
public:
    explicit DataError(const std::string& what) : Error(what, 3) {}
};

/// Non-finite values or degenerate numerics (exit code 4).
class NumericError : public Error {
public:
    explicit NumericError(const std::string& what) : Error(what, 4) {}
};

}  // namespace cashewmap
