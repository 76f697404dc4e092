#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace promptseg {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Requested extent does not fit the volume.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// Malformed file, header, or encoded string.
class FormatError : public Error {
 public:
  using Error::Error;
};

// Invalid configuration or domain value.
class ValidationError : public Error {
 public:
  using Error::Error;
};

// Tensor shape does not match what a network expects.
class ShapeError : public Error {
 public:
  using Error::Error;
};

class TrainingError : public Error {
 public:
  using Error::Error;
};

// A point prompt lies outside the volume.
class PromptError : public Error {
 public:
  PromptError(std::size_t index, const std::string& what)
      : Error(what), index_(index) {}

  std::size_t index() const noexcept { return index_; }

 private:
  std::size_t index_;
};

}  // namespace promptseg
