#pragma once

#include <stdexcept>
#include <string>

namespace giplab {

// Root of every exception thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

// A forward op produced NaN or Inf.
class NumericError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line)
      : Error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

class VersionError : public Error {
 public:
  using Error::Error;
};

class IngestError : public Error {
 public:
  using Error::Error;
};

class StratificationError : public Error {
 public:
  using Error::Error;
};

class CompatibilityError : public Error {
 public:
  using Error::Error;
};

}  // namespace giplab
