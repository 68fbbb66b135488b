#pragma once

#include <stdexcept>
#include <string>

namespace tomo {

// Bad inputs, shape mismatches, malformed files. CLI exit code 2.
struct ValidationError : std::runtime_error {
    explicit ValidationError(const std::string& m) : std::runtime_error(m) {}
};

// Non-finite values, divergence, failed optimization runs. CLI exit code 3.
struct NumericError : std::runtime_error {
    explicit NumericError(const std::string& m) : std::runtime_error(m) {}
};

}  // namespace tomo
