// SPDX-License-Identifier: Apache-2.0
//
// Error categories shared by the library and the CLI exit-code mapping.

#pragma once

#include <stdexcept>
#include <string>

namespace hexplan {

/// Malformed or schema-violating input (cluster, model, workload, plan files).
class ParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// The device pool cannot host even one model replica.
class InfeasiblePoolError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// An internal invariant was violated (e.g. an emitted plan fails validation).
class InvariantError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

}  // namespace hexplan
