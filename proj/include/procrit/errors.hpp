#pragma once

#include <stdexcept>
#include <string>

namespace procrit {

/// Base class for every error raised by the toolkit.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid configuration (bad spec values, empty datasets, G < 2, ...).
class ConfigError : public Error {
 public:
  using Error::Error;
};

class BoundsError : public Error {
 public:
  using Error::Error;
};

/// Malformed input text (manifest lines, checkpoints, config files).
class ParseError : public Error {
 public:
  using Error::Error;
};

class NumericError : public Error {
 public:
  using Error::Error;
};

/// Caller violated an API precondition (length mismatch, kind mismatch, ...).
class UsageError : public Error {
 public:
  using Error::Error;
};

/// Render input that cannot be represented in the tag grammar.
class RenderError : public Error {
 public:
  using Error::Error;
};

/// Network failure after all retries were exhausted.
class TransportError : public Error {
 public:
  TransportError(std::string sample_id, const std::string& what)
      : Error(what), sample_id_(std::move(sample_id)) {}
  const std::string& sample_id() const noexcept { return sample_id_; }

 private:
  std::string sample_id_;
};

/// The endpoint answered, but not with the expected response schema.
class ProtocolError : public Error {
 public:
  using Error::Error;
};

}  // namespace procrit
