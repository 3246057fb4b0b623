#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace phiscrub {

// Root of every exception thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Tensor shape or dimension disagreement.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// Malformed input data (corpus, embeddings, rules, model files).
// `line` is 1-based, 0 when the error is not tied to a line.
class DataError : public Error {
 public:
  explicit DataError(const std::string& what, std::size_t line = 0)
      : Error(line == 0 ? what : what + " (line " + std::to_string(line) + ")"),
        line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

// A caller violated an operation's precondition.
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

}  // namespace phiscrub
