#pragma once

#include <stdexcept>
#include <string>

namespace cdsgd {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid user-supplied configuration (dims, hyperparameters, config keys).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// A non-finite value appeared where only finite values are legal.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Two vectors that should share a key layout do not.
class StructuralError : public Error {
 public:
  using Error::Error;
};

class BoundsError : public Error {
 public:
  using Error::Error;
};

class CorruptPayloadError : public Error {
 public:
  using Error::Error;
};

/// Bad magic, version or tag, or a message that breaks the push/pull contract.
class ProtocolError : public Error {
 public:
  using Error::Error;
};

/// A frame whose declared length does not match the bytes available.
class FramingError : public Error {
 public:
  using Error::Error;
};

class DisconnectError : public Error {
 public:
  using Error::Error;
};

class TimeoutError : public Error {
 public:
  using Error::Error;
};

/// Internal ordering bug in a worker state machine. Never recoverable.
class SchedulingError : public Error {
 public:
  using Error::Error;
};

class DivergenceError : public Error {
 public:
  using Error::Error;
};

}  // namespace cdsgd
