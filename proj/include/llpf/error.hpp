#pragma once

#include <stdexcept>
#include <string>

namespace llpf {

// Base for every failure raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad input supplied by a caller: malformed config, missing file, wrong
// shapes. The CLI maps these to exit code 1.
class ValidationError : public Error {
 public:
  using Error::Error;
};

}  // namespace llpf
