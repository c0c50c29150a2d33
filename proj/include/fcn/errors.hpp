#pragma once

#include <stdexcept>
#include <string>

namespace fcn {

// Shape or dimension violation in a tensor op or a binary file header.
struct ShapeError : std::runtime_error {
    explicit ShapeError(const std::string& what) : std::runtime_error(what) {}
};

// Malformed or incompatible on-disk artifact (bad magic, version, parse failure).
struct FormatError : std::runtime_error {
    explicit FormatError(const std::string& what) : std::runtime_error(what) {}
};

// An id referenced by a manifest or outfit that resolves to nothing.
struct DanglingReferenceError : std::runtime_error {
    explicit DanglingReferenceError(const std::string& what) : std::runtime_error(what) {}
};

// Invalid user-supplied configuration or arguments; the CLI maps this to exit code 1.
struct ValidationError : std::runtime_error {
    explicit ValidationError(const std::string& what) : std::runtime_error(what) {}
};

// Non-finite values where finite math is required (e.g. NaN gradients).
struct NumericError : std::runtime_error {
    explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace fcn
