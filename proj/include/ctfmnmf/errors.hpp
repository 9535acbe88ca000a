// Error types shared across the library. The CLI maps these to exit codes.

#pragma once

#include <stdexcept>
#include <string>

namespace ctfmnmf {

// Invalid configuration (bad tap split, nonpositive floor, ...). CLI exit 2.
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// File and format failures. CLI exit 3.
struct IoError : std::runtime_error {
  explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

// Numerical degeneracy (singular demixing system, zero denominator, NaN).
// Carries enough context to locate the failure. CLI exit 4.
struct DegeneracyError : std::runtime_error {
  DegeneracyError(const std::string& msg, int iteration = -1, int bin = -1,
                  int row = -1)
      : std::runtime_error(msg), iteration(iteration), bin(bin), row(row) {}

  DegeneracyError with_context(int iter, int bin_index) const {
    DegeneracyError e(what(), iter, bin_index, row);
    return e;
  }

  int iteration;
  int bin;
  int row;
};

}  // namespace ctfmnmf
