#pragma once

#include <stdexcept>
#include <string>

namespace trackbench {

/// Base class for every error raised by the toolkit.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A domain value violates one of its type invariants.
class InvariantError : public Error {
public:
    using Error::Error;
};

/// A file could not be parsed or has the wrong format version.
class FormatError : public Error {
public:
    using Error::Error;
};

/// Tensor or configuration shapes do not agree.
class ShapeError : public Error {
public:
    using Error::Error;
};

/// An operation was called in the wrong lifecycle state.
class StateError : public Error {
public:
    using Error::Error;
};

} // namespace trackbench
