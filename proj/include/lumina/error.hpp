#pragma once

#include <stdexcept>
#include <string>

namespace lumina {

/// Base for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// File could not be opened, read or written.
class IoError : public Error {
 public:
  using Error::Error;
};

/// Raster file decoding failure. The code distinguishes the failure class.
class ImageFormatError : public IoError {
 public:
  enum class Code { MalformedHeader, UnsupportedBitDepth, TruncatedPayload, UnsupportedFormat };

  ImageFormatError(Code code, const std::string& what) : IoError(what), code_(code) {}
  Code code() const noexcept { return code_; }

 private:
  Code code_;
};

/// Operand shapes disagree (image sizes, tensor shapes, vector lengths).
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Input violates an operation's precondition (too small, degenerate, out of range).
class PreconditionError : public Error {
 public:
  using Error::Error;
};

/// Bad configuration or command-line value.
class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace lumina
