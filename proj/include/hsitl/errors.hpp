#pragma once

#include <stdexcept>
#include <string>

namespace hsitl {

/// Invalid configuration: bad CLI/config values, unsatisfiable requests,
/// infeasible architectures. Maps to exit code 1.
class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Invalid or corrupt data: unreadable files, format violations, shape
/// mismatches. Maps to exit code 2.
class DataError : public std::runtime_error {
public:
    explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace hsitl
