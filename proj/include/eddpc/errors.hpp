#pragma once

#include <stdexcept>
#include <string>

namespace eddpc {

/// Base class for all library errors.
class Error : public std::runtime_error {
public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

/// Malformed or dimensionally inconsistent input.
class InvalidInputError : public Error {
public:
  using Error::Error;
};

/// A matrix required to be Schur-stable has spectral radius >= 1.
class UnstableMatrixError : public Error {
public:
  using Error::Error;
};

/// An iterative solver failed numerically (not a statement about the problem).
class SolverFailureError : public Error {
public:
  using Error::Error;
};

/// Text input could not be parsed; carries a line number when known.
class ParseError : public Error {
public:
  ParseError(const std::string& what, long line = -1)
      : Error(line >= 0 ? what + " (line " + std::to_string(line) + ")" : what),
        line_(line) {}
  long line() const { return line_; }

private:
  long line_;
};

/// A file parsed but does not match the expected schema/version.
class SchemaError : public Error {
public:
  using Error::Error;
};

/// The QP is infeasible at the queried state.
class InfeasibleStateError : public Error {
public:
  using Error::Error;
};

/// The data-based predictor is undefined (rank condition violated).
class PredictorUndefinedError : public Error {
public:
  using Error::Error;
};

}  // namespace eddpc
