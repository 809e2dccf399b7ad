#pragma once

#include <stdexcept>
#include <string>

namespace poison {

// Dimension metadata disagrees with the data it describes.
struct ShapeError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Training left the finite regime; carries the offending iteration.
struct DivergenceError : std::runtime_error {
  DivergenceError(const std::string& what, int iteration_)
      : std::runtime_error(what + " (iteration " + std::to_string(iteration_) + ")"),
        iteration(iteration_) {}
  int iteration;
};

// Fixed-point trajectory reversal failed to contract.
struct ReversalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Conjugate gradients could not reach the requested residual.
struct IllConditionedError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// A verification oracle declined to run or produced non-finite values.
struct OracleError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Malformed input file; carries a 1-based line number when known.
struct ParseError : std::runtime_error {
  explicit ParseError(const std::string& what, long line_ = -1)
      : std::runtime_error(line_ >= 0 ? what + " (line " + std::to_string(line_) + ")" : what),
        line(line_) {}
  long line;
};

// Bad experiment configuration (unknown key, missing key, invalid value).
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace poison
