#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace urbancd {

// Root of every error the library throws. `kind()` is a stable token used by
// the CLI when emitting machine-parsable error lines.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
  virtual const char* kind() const noexcept { return "error"; }
};

class EmptyCloudError : public Error {
 public:
  explicit EmptyCloudError(const std::string& where)
      : Error(where + ": point cloud is empty") {}
  const char* kind() const noexcept override { return "empty_cloud"; }
};

class ConfigError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "config"; }
};

class InvalidParamsError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "invalid_params"; }
};

class ShapeMismatchError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "shape_mismatch"; }
};

class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t byte_offset)
      : Error(what + " (at byte " + std::to_string(byte_offset) + ")"),
        offset_(byte_offset) {}
  std::size_t offset() const noexcept { return offset_; }
  const char* kind() const noexcept override { return "parse"; }

 private:
  std::size_t offset_;
};

class IoError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "io"; }
};

}  // namespace urbancd
