#pragma once

#include <stdexcept>
#include <string>

namespace povmap {

/// Base class for every error raised by the library. Messages are one line
/// and meant to be shown to the user as-is.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Non-finite numbers, out-of-range arguments, arity mismatches.
class InvalidInput : public Error {
public:
  using Error::Error;
};

/// Zoom level outside the range an operation supports.
class InvalidLevel : public InvalidInput {
public:
  using InvalidInput::InvalidInput;
};

/// Malformed quadkeys and CSV rows that do not match their schema.
class ParseError : public Error {
public:
  using Error::Error;
};

class SchemaError : public ParseError {
public:
  using ParseError::ParseError;
};

/// Input that has no variance to work with (constant matrices, etc).
class DegenerateInput : public Error {
public:
  using Error::Error;
};

/// A metric that is not defined for the given data (zero variance).
class UndefinedMetric : public Error {
public:
  using Error::Error;
};

/// A survey cluster with no feature tile inside its jitter window.
class UnjoinableCluster : public Error {
public:
  using Error::Error;
};

} // namespace povmap
