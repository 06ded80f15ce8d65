#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace dmt {

// Base of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

// NaN/Inf where a finite value is required.
class NumericError : public Error {
 public:
  using Error::Error;
};

class InvalidArgument : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

class CheckpointError : public Error {
 public:
  enum class Kind {
    kMagicMismatch,
    kVersionMismatch,
    kTruncated,
    kShapeMetadata,
    kCorrupt,
    kDimMismatch,
    kResolutionMismatch,
    kWrongKind,  // valid file, but not the artifact type the caller asked for
  };

  CheckpointError(Kind kind, const std::string& what) : Error(what), kind_(kind) {}

  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

const char* to_string(CheckpointError::Kind kind);

// Raised by the trainer when a batch produces a NaN/Inf loss.
class NonFiniteLoss : public Error {
 public:
  NonFiniteLoss(std::size_t batch_index, const std::string& what)
      : Error(what), batch_index_(batch_index) {}

  std::size_t batch_index() const { return batch_index_; }

 private:
  std::size_t batch_index_;
};

}  // namespace dmt
