#pragma once

#include <stdexcept>
#include <string>

namespace hetpfl {

/// Tensor shapes do not line up (names both shapes in the message).
struct DimensionError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

/// An operation precondition was violated by the caller.
struct ContractError : std::logic_error {
    using std::logic_error::logic_error;
};

/// A non-finite value appeared where the numeric contract forbids it.
struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// A declared input schema does not match the file contents.
struct SchemaError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Malformed input file (CSV cell, JSON document, checkpoint).
struct ParseError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Invalid experiment configuration.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace hetpfl
