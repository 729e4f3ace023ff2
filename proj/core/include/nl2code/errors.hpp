#pragma once

#include <stdexcept>
#include <string>

namespace nl2code {

// Raised for bad user input: malformed config or data files, impossible
// hyperparameters, out-of-range CLI flags. The CLI maps this to exit code 1;
// every other uncaught exception maps to exit code 2.
class ValidationError : public std::runtime_error {
 public:
  explicit ValidationError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace nl2code
