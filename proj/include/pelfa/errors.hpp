#pragma once

#include <stdexcept>
#include <string>

namespace pelfa {

// Bad configuration (invalid hyperparameters, mismatched model/config shapes).
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// A caller broke an operation's precondition (shape mismatch, out-of-range fold, ...).
struct ContractViolation : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Manifest / config text could not be parsed.
struct ParseError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// crop_segmented received a mask with no foreground pixels.
struct EmptyMaskError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace pelfa
