#pragma once

#include <stdexcept>
#include <string>

namespace ergolab {

// Bad parameters, malformed config. Maps to exit code 1 in the CLI.
struct ConfigError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// Solver failures, near-degenerate spectra, broken invariants. Exit code 2.
struct NumericalError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Filesystem trouble. Exit code 3.
struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace ergolab
