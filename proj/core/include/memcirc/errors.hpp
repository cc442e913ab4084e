#pragma once

#include <stdexcept>
#include <string>

namespace memcirc {

// Caller broke a documented precondition (shape mismatch, bad token id, ...).
class ContractViolation : public std::logic_error {
 public:
  explicit ContractViolation(const std::string& what) : std::logic_error(what) {}
};

// A computation produced NaN/Inf.
class NumericFailure : public std::runtime_error {
 public:
  explicit NumericFailure(const std::string& what) : std::runtime_error(what) {}
};

// A search or builder could not reach its goal (circuit target, memorization
// target, empty dataset).
class SearchFailure : public std::runtime_error {
 public:
  explicit SearchFailure(const std::string& what) : std::runtime_error(what) {}
};

inline void require(bool cond, const std::string& what) {
  if (!cond) throw ContractViolation(what);
}

}  // namespace memcirc
