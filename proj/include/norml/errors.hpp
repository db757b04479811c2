#pragma once

#include <stdexcept>
#include <string>

namespace norml {

// Caller violated a documented precondition (shape mismatch, wrong arity,
// missing data).
class ContractError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Training produced non-finite parameters.
class NumericAbort : public std::runtime_error {
 public:
  NumericAbort(const std::string& what, int iteration)
      : std::runtime_error(what), iteration_(iteration) {}
  int iteration() const noexcept { return iteration_; }

 private:
  int iteration_;
};

}  // namespace norml
