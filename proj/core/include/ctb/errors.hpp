#pragma once

#include <stdexcept>
#include <string>

namespace ctb {

// Malformed input bytes: bad syntax, bad container magic, missing fields.
struct ParseError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Structurally well-formed input that violates a documented invariant.
struct ValidationError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Tensor/shape/capacity mismatches between data and configuration.
struct ShapeError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace ctb
