#pragma once

#include <stdexcept>
#include <string>

namespace fdw2s {

// Base of every error the library throws. Subclasses name the failure class
// so callers (and the CLI exit-code mapping) can tell them apart.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct InvalidInput : Error {
  using Error::Error;
};
struct ConfigError : Error {
  using Error::Error;
};
struct ShapeError : Error {
  using Error::Error;
};
struct DomainError : Error {
  using Error::Error;
};
struct UnsupportedOperation : Error {
  using Error::Error;
};
struct NumericError : Error {
  using Error::Error;
};

}  // namespace fdw2s
