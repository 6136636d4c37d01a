#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace dsgd {

/// Bad arguments or configuration supplied by the caller.
class InvalidArgument : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Malformed or inconsistent input data (parse errors, bad labels, dimension
/// mismatches against a dataset).
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A model file that cannot be decoded: truncation, wrong magic or version,
/// checksum mismatch.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Training produced a non-finite prediction, usually because the step size
/// schedule is too aggressive for the data.
class DivergenceError : public std::runtime_error {
 public:
  DivergenceError(std::uint64_t iteration, const std::string& what)
      : std::runtime_error(what), iteration_(iteration) {}

  std::uint64_t iteration() const noexcept { return iteration_; }

 private:
  std::uint64_t iteration_;
};

}  // namespace dsgd
