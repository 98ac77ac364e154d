#pragma once

#include <stdexcept>
#include <string>

namespace stabds {

/// Broad failure classes. The CLI maps each to its own exit code.
enum class ErrorKind { schema, numeric, config };

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, std::string module, const std::string& what)
        : std::runtime_error(module + ": " + what), kind_(kind), module_(std::move(module)) {}

    ErrorKind kind() const noexcept { return kind_; }
    const std::string& module() const noexcept { return module_; }

private:
    ErrorKind kind_;
    std::string module_;
};

// Malformed input data: unbalanced panels, missing columns, bad CSV cells.
class SchemaError : public Error {
public:
    SchemaError(std::string module, const std::string& what)
        : Error(ErrorKind::schema, std::move(module), what) {}
};

// The data parse but the computation is undefined (rank deficiency,
// zero denominators, degenerate designs).
class NumericError : public Error {
public:
    NumericError(std::string module, const std::string& what)
        : Error(ErrorKind::numeric, std::move(module), what) {}
};

// Invalid arguments or configuration values.
class ConfigError : public Error {
public:
    ConfigError(std::string module, const std::string& what)
        : Error(ErrorKind::config, std::move(module), what) {}
};

}  // namespace stabds
