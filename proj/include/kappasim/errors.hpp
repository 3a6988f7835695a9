#pragma once

#include <stdexcept>
#include <string>

namespace kappasim {

/// Base class for all library errors.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// An argument violates a precondition (wrong range, wrong shape, wrong kind).
class DomainError : public Error {
public:
    using Error::Error;
};

/// A model was evaluated outside its declared validity range.
class ValidityError : public Error {
public:
    using Error::Error;
};

/// A rate transformation cannot be inverted (at or beyond saturation).
class NonInvertibleError : public Error {
public:
    using Error::Error;
};

/// The requested quantity is undefined on this input (e.g. kappa with delta = 0).
class UndefinedValueError : public Error {
public:
    using Error::Error;
};

/// A solver found no solution within tolerance; carries the best residual seen.
class NoSolutionError : public Error {
public:
    NoSolutionError(const std::string& what, double best_residual)
        : Error(what), best_residual_(best_residual) {}
    double best_residual() const noexcept { return best_residual_; }

private:
    double best_residual_;
};

/// The estimation problem is degenerate (flat objective, no usable signal).
class IllConditionedError : public Error {
public:
    using Error::Error;
};

/// Structured-text input could not be parsed; carries 1-based line/column.
class ParseError : public Error {
public:
    ParseError(const std::string& what, long line, long column)
        : Error(what), line_(line), column_(column) {}
    long line() const noexcept { return line_; }
    long column() const noexcept { return column_; }

private:
    long line_;
    long column_;
};

/// Filesystem-level failure (missing file, unwritable output, ...).
class IoError : public Error {
public:
    using Error::Error;
};

} // namespace kappasim
