#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace lctem {

/// Base class for every error raised by the toolkit.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed input file; carries the byte offset where parsing stopped.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t offset)
      : Error(what + " (at byte " + std::to_string(offset) + ")"), offset_(offset) {}

  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

class IoError : public Error {
 public:
  using Error::Error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

class MetadataError : public Error {
 public:
  using Error::Error;
};

/// Bad user input that is not a file-format problem (config keys, manifests, ranges).
class InputError : public Error {
 public:
  using Error::Error;
};

/// Least-squares design matrix without enough independent columns.
class DegenerateDesignError : public Error {
 public:
  using Error::Error;
};

/// A NaN or infinity reached an optimizer or a loss.
class NonFiniteError : public Error {
 public:
  using Error::Error;
};

class CheckpointError : public Error {
 public:
  enum class Kind { Truncated, BadMagic, Version, Checksum, Shape, Config };

  CheckpointError(Kind kind, const std::string& what) : Error(what), kind_(kind) {}

  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

}  // namespace lctem
