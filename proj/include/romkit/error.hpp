#pragma once

#include <stdexcept>
#include <string>

namespace romkit {

/// Failure categories; each maps onto one CLI exit code.
enum class ErrorKind { config, numerical, io };

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

/// Invalid input, bad configuration or a violated precondition.
class ConfigError : public Error {
public:
    explicit ConfigError(const std::string& what) : Error(ErrorKind::config, what) {}
};

/// Factorization breakdown, divergence, non-finite data.
class NumericalError : public Error {
public:
    explicit NumericalError(const std::string& what) : Error(ErrorKind::numerical, what) {}
};

/// Unreadable, truncated or malformed files.
class IoError : public Error {
public:
    explicit IoError(const std::string& what) : Error(ErrorKind::io, what) {}
};

/// Throws the subclass that matches `kind`.
[[noreturn]] inline void raise(ErrorKind kind, const std::string& what) {
    switch (kind) {
    case ErrorKind::config: throw ConfigError(what);
    case ErrorKind::numerical: throw NumericalError(what);
    case ErrorKind::io: throw IoError(what);
    }
    throw Error(kind, what);
}

inline int exit_code(ErrorKind kind) {
    switch (kind) {
    case ErrorKind::config: return 2;
    case ErrorKind::numerical: return 3;
    case ErrorKind::io: return 4;
    }
    return 1;
}

}  // namespace romkit
