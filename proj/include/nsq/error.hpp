#pragma once

#include <stdexcept>
#include <string>

namespace nsq {

/// Sizes that do not line up (vector lengths, block structure, powers of two).
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Out-of-range scheme or solver parameters.
class ParameterError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class ConstructionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A formula evaluated outside its domain of definition.
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// An exhaustive computation whose size exceeds the configured budget.
class BudgetError : public std::length_error {
 public:
  using std::length_error::length_error;
};

namespace detail {

inline void require_same_size(std::size_t got, std::size_t expected, const char* what) {
  if (got != expected) {
    throw DimensionError(std::string(what) + ": expected length " + std::to_string(expected) +
                         ", got " + std::to_string(got));
  }
}

}  // namespace detail
}  // namespace nsq
