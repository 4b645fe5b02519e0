#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace probreg {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operation not defined for the distribution kind (e.g. log-loss of a mixed law).
class UnsupportedKind : public Error {
 public:
  using Error::Error;
};

/// Argument outside the mathematical domain of an operation.
class DomainError : public Error {
 public:
  using Error::Error;
};

class InvalidWeights : public Error {
 public:
  using Error::Error;
};

class SingularTransform : public Error {
 public:
  using Error::Error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

class NotFitted : public Error {
 public:
  using Error::Error;
};

class TuningFailed : public Error {
 public:
  using Error::Error;
};

class FoldTooSmall : public Error {
 public:
  using Error::Error;
};

class StratificationError : public Error {
 public:
  using Error::Error;
};

class WeightCollapse : public Error {
 public:
  using Error::Error;
};

class OutOfRange : public Error {
 public:
  using Error::Error;
};

/// Test statistic undefined (all differences zero, zero variance).
class DegenerateSample : public Error {
 public:
  using Error::Error;
};

class IngestError : public Error {
 public:
  IngestError(std::size_t row, std::size_t col, const std::string& what)
      : Error("row " + std::to_string(row) + ", column " + std::to_string(col) + ": " + what),
        row_(row),
        col_(col) {}
  std::size_t row() const noexcept { return row_; }
  std::size_t col() const noexcept { return col_; }

 private:
  std::size_t row_;
  std::size_t col_;
};

class ParseError : public Error {
 public:
  ParseError(std::size_t offset, const std::string& what)
      : Error("offset " + std::to_string(offset) + ": " + what), offset_(offset) {}
  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

}  // namespace probreg
