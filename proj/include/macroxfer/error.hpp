#pragma once

#include <stdexcept>
#include <string>

namespace macroxfer {

/// Invalid configuration or argument combination.
class ConfigError : public std::invalid_argument {
public:
    explicit ConfigError(const std::string& what) : std::invalid_argument(what) {}
};

/// Malformed, missing, or out-of-domain input data.
class DataError : public std::runtime_error {
public:
    explicit DataError(const std::string& what) : std::runtime_error(what) {}
};

/// Training diverged or produced a non-finite quantity.
class TrainingError : public std::runtime_error {
public:
    explicit TrainingError(const std::string& what) : std::runtime_error(what) {}
};

/// Linear system could not be solved (rank deficiency, indefinite matrix).
class NumericError : public std::runtime_error {
public:
    explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace macroxfer
