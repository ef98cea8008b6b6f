#pragma once

#include <stdexcept>

namespace svfm {

// Raised by tensor ops when operand shapes are incompatible.
struct ShapeError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// Raised when an operation produces NaN/Inf, or training diverges.
struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct CheckpointError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace svfm
