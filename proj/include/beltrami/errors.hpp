#pragma once

#include <stdexcept>
#include <string>

namespace beltrami {

// Base for everything the library throws on purpose.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad arguments or malformed input files. The CLI maps these to exit code 2.
class InputError : public Error {
 public:
  using Error::Error;
};

// Non-finite values, failed solves, exhausted step budgets. Exit code 1.
class NumericalError : public Error {
 public:
  using Error::Error;
};

}  // namespace beltrami
