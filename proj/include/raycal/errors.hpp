#pragma once

#include <stdexcept>
#include <string>

namespace raycal {

/// Malformed or inconsistent user input (files, configuration, arguments).
class InputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// No usable channel: every candidate produced an outage.
class InfeasibleError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// An internal invariant was violated (geometry inconsistency, tracer bug).
class InvariantError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

}  // namespace raycal
