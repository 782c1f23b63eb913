// Error types shared by every mgf module.
#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace mgf {

class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

// Malformed input bytes. `offset` is a byte offset, or a 1-based row/line
// number for line-oriented formats (the message says which).
class ParseError : public Error {
public:
  ParseError(const std::string& what, std::size_t offset)
      : Error(what), offset_(offset) {}
  std::size_t offset() const noexcept { return offset_; }

private:
  std::size_t offset_;
};

// Well-formed input that violates a domain invariant.
class ValidationError : public Error {
public:
  using Error::Error;
};

class ShapeError : public Error {
public:
  using Error::Error;
};

}  // namespace mgf
