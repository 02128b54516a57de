#pragma once

#include <stdexcept>
#include <string>

namespace halinfer {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed or inconsistent caller input (dimension mismatch, bad settings, bad CSV cell).
class InputError : public Error {
public:
    using Error::Error;
};

/// A quantity the computation needs is degenerate: constant outcome, zero reference SE.
class DegenerateError : public Error {
public:
    using Error::Error;
};

/// An internal invariant was violated. Seeing this means a bug.
class InvariantError : public Error {
public:
    using Error::Error;
};

namespace detail {

inline void require(bool ok, const std::string& what) {
    if (!ok) throw InputError(what);
}

inline void ensure(bool ok, const std::string& what) {
    if (!ok) throw InvariantError(what);
}

} // namespace detail

} // namespace halinfer
