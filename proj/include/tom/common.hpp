#pragma once

#include <stdexcept>
#include <string>

namespace tom {

// Raised when an update or solve hits non-finite values or an otherwise
// unrecoverable numerical condition. The CLI maps this to exit code 2.
struct NumericalError : std::runtime_error {
  explicit NumericalError(const std::string& what) : std::runtime_error(what) {}
};

inline void require(bool cond, const std::string& what) {
  if (!cond) throw std::invalid_argument(what);
}

}  // namespace tom
