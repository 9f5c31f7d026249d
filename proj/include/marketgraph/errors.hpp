#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace marketgraph {

// Shapes that do not line up for an operation.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Values outside an operation's mathematical domain (log of 0, NaN input, ...).
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// Misuse of a differentiation tape (double backward, non-scalar loss, ...).
class TapeError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// Rank-deficient least-squares problem.
class SingularSystemError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed input data (CSV rows, dates, cells).
class IngestError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Invalid user configuration; the CLI maps this to exit code 2.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class TrainingDiverged : public std::runtime_error {
 public:
  TrainingDiverged(std::size_t epoch, const std::string& what)
      : std::runtime_error(what), epoch_(epoch) {}
  std::size_t epoch() const noexcept { return epoch_; }

 private:
  std::size_t epoch_;
};

}  // namespace marketgraph
