#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace ltre {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// Malformed text input. `line()` is 1-based, 0 when not applicable.
class ParseError : public Error {
  public:
    ParseError(const std::string& what, std::size_t line)
            : Error(line ? what + " (line " + std::to_string(line) + ")" : what),
              line_(line) {}

    std::size_t line() const noexcept {
        return line_;
    }

  private:
    std::size_t line_;
};

/// Well-formed input that violates a domain invariant.
class ValidationError : public Error {
  public:
    using Error::Error;
};

/// Binary file with a bad header or truncated payload.
class FormatError : public Error {
  public:
    using Error::Error;
};

/// Caller broke an API precondition (shape mismatch, stale cache, ...).
class ContractError : public Error {
  public:
    using Error::Error;
};

/// Experiment configuration that cannot be run.
class ConfigError : public Error {
  public:
    using Error::Error;
};

/// NaN or infinity reached the training math.
class NumericError : public Error {
  public:
    using Error::Error;
};

} // namespace ltre
