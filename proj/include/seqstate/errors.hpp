#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace seqstate {

// Precondition violated by the caller (shape mismatch, bad argument).
class ContractError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// NaN/Inf encountered, divergence, solver step budget exhausted.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed or inconsistent input data (files, cohorts, run directories).
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// CSV ingestion failure tied to a 1-based data row (header is row 0).
class IngestError : public DataError {
 public:
  IngestError(const std::string& what, std::size_t row)
      : DataError("row " + std::to_string(row) + ": " + what), row_(row) {}

  std::size_t row() const noexcept { return row_; }

 private:
  std::size_t row_;
};

}  // namespace seqstate
