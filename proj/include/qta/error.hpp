#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace qta {

/// Base class for every error raised by the toolkit. The CLI maps the
/// concrete type to a stable process exit code.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Precondition violated by caller-supplied values.
class ValidationError : public Error {
public:
  using Error::Error;
};

/// Malformed input text. Carries the 1-based line (or character position
/// for single-line grammars such as SMILES) when one is known.
class ParseError : public Error {
public:
  ParseError(const std::string &what, std::size_t location = 0)
      : Error(location ? what + " (at " + std::to_string(location) + ")" : what),
        location_(location) {}
  std::size_t location() const noexcept { return location_; }

private:
  std::size_t location_;
};

class UnsupportedElementError : public ParseError {
public:
  using ParseError::ParseError;
};

/// Non-finite values or degenerate numerics (divergence, zero variance).
class NumericError : public Error {
public:
  using Error::Error;
};

/// A required input artifact is absent or its provenance does not match.
class MissingArtifactError : public Error {
public:
  using Error::Error;
};

inline void require(bool cond, const std::string &msg) {
  if (!cond)
    throw ValidationError(msg);
}

} // namespace qta
