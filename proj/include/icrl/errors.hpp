#pragma once

#include <stdexcept>
#include <string>

namespace icrl {

/// Invalid user-supplied configuration (empty state set, discount >= 1, ...).
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A caller broke an operation's precondition (shape or mode mismatch).
class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Non-finite or exploding values during training or deployment.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {

inline void require(bool ok, const std::string& what) {
  if (!ok) throw ContractError(what);
}

inline void require_config(bool ok, const std::string& what) {
  if (!ok) throw ConfigError(what);
}

}  // namespace detail
}  // namespace icrl
