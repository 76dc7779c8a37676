#ifndef MERGENET_ERRORS_HPP
#define MERGENET_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace mergenet {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operand shapes do not satisfy an operation's typing rule.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// A documented precondition was violated by the caller.
class ContractError : public Error {
 public:
  using Error::Error;
};

/// Malformed on-disk data (checkpoints, CIFAR binaries, CSV records).
class FormatError : public Error {
 public:
  using Error::Error;
};

/// Invalid experiment configuration; the message names the offending key.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Inconsistent transfer plan (e.g. frozen source asked to receive).
class PlanError : public Error {
 public:
  using Error::Error;
};

/// Training produced a NaN/Inf loss.
class NonFiniteError : public Error {
 public:
  using Error::Error;
};

}  // namespace mergenet

#endif  // MERGENET_ERRORS_HPP
