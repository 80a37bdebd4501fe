// Copyright (c) 2026 the lpfp authors
// SPDX-License-Identifier: Apache-2.0
#ifndef LPFP_ERROR_HPP
#define LPFP_ERROR_HPP

#include <stdexcept>
#include <string>

namespace lpfp {

// Error taxonomy. Each class maps to one documented CLI exit code (see README).
// Library code throws; the CLI front end is the only place that catches.

struct IoError : std::runtime_error {
  explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

// Malformed manifest, scheme, blob, dataset, or format string.
struct ParseError : std::runtime_error {
  explicit ParseError(const std::string& msg) : std::runtime_error(msg) {}
};

// A structural precondition was violated: incompatible formats, illegal
// PE configuration, shape mismatch, packing constraint.
struct ConstraintError : std::runtime_error {
  explicit ConstraintError(const std::string& msg) : std::runtime_error(msg) {}
};

// A fixed-point value exceeded its declared width. Never wrapped silently.
struct FixedOverflowError : std::runtime_error {
  explicit FixedOverflowError(const std::string& msg) : std::runtime_error(msg) {}
};

// Structurally valid input the pipeline cannot do anything useful with:
// empty tensor, empty dataset, missing calibration.
struct DegenerateInputError : std::runtime_error {
  explicit DegenerateInputError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace lpfp

#endif
