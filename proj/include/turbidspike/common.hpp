#pragma once

#include <stdexcept>
#include <string>

namespace turbidspike {

// Error taxonomy shared across the pipeline. The CLI maps these onto
// exit codes (config -> 2, data -> 3, numeric -> 4).
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

inline constexpr const char* kToolVersion = "0.1.0";

}  // namespace turbidspike
