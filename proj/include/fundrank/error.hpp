#pragma once

#include <stdexcept>
#include <string>

namespace fundrank {

// Failure categories; the CLI maps them to exit codes 2, 3 and 4.
enum class ErrorKind { config, data, numerical };

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, std::string code, const std::string& message)
        : std::runtime_error(code + ": " + message), kind_(kind), code_(std::move(code)) {}

    ErrorKind kind() const noexcept { return kind_; }
    // Stable identifier such as "DuplicateQuarter".
    const std::string& code() const noexcept { return code_; }

private:
    ErrorKind kind_;
    std::string code_;
};

class ConfigError : public Error {
public:
    ConfigError(std::string code, const std::string& message)
        : Error(ErrorKind::config, std::move(code), message) {}
};

class DataError : public Error {
public:
    DataError(std::string code, const std::string& message)
        : Error(ErrorKind::data, std::move(code), message) {}
};

class NumericalError : public Error {
public:
    NumericalError(std::string code, const std::string& message)
        : Error(ErrorKind::numerical, std::move(code), message) {}
};

inline int exit_code(ErrorKind kind) noexcept {
    switch (kind) {
    case ErrorKind::config: return 2;
    case ErrorKind::data: return 3;
    case ErrorKind::numerical: return 4;
    }
    return 1;
}

} // namespace fundrank
