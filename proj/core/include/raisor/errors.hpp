#pragma once

#include <stdexcept>
#include <string>

namespace raisor {

/// Base class for every failure raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// Importance weights collapsed: nothing (or too little) left to normalize.
class DegenerateWeights : public Error {
 public:
  using Error::Error;
};

class InsufficientSupport : public Error {
 public:
  using Error::Error;
};

/// Weighted EM could not keep every mixture component populated.
class ComponentStarvation : public Error {
 public:
  using Error::Error;
};

class ReplenishFailed : public Error {
 public:
  using Error::Error;
};

class AnnealFailed : public Error {
 public:
  using Error::Error;
};

class DuplicateLocation : public Error {
 public:
  using Error::Error;
};

/// Linear algebra breakdown (non positive-definite matrix and the like).
class NumericalError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace raisor
