#pragma once

#include <stdexcept>
#include <string>

namespace bdg {

// Base for everything thrown by this library.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Tensor shape mismatches; the message names both shapes.
struct DimensionError : Error {
    using Error::Error;
};

// Empty batch fed to an operation that needs at least one sample.
struct DegenerateBatchError : Error {
    using Error::Error;
};

// API misuse: non-scalar backward, repeated backward, balanced sampling
// without labels, and similar broken preconditions.
struct ContractError : Error {
    using Error::Error;
};

// Invalid user-supplied values (shift specs, checkpoint/dataset mismatch).
struct ValidationError : Error {
    using Error::Error;
};

// Malformed input files; carries a line number where known.
struct ParseError : Error {
    ParseError(const std::string& msg, std::size_t line)
        : Error(msg + " (line " + std::to_string(line) + ")"), line_number(line) {}
    explicit ParseError(const std::string& msg) : Error(msg), line_number(0) {}
    std::size_t line_number;
};

// Bad experiment configuration (unknown key, out-of-range hyperparameter).
struct ConfigError : Error {
    using Error::Error;
};

// Optimizer state inconsistent with the parameters it serves.
struct StateError : Error {
    using Error::Error;
};

// A loss became non-finite during training.
struct DivergenceError : Error {
    using Error::Error;
};

struct IoError : Error {
    using Error::Error;
};

}  // namespace bdg
