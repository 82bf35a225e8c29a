#pragma once

#include <stdexcept>
#include <string>

namespace rlhedge {

// Every failure raised by the library derives from Error so callers (the CLI
// in particular) can map categories to exit codes.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A parameter lies outside its documented domain.
class ParameterError : public Error {
public:
    using Error::Error;
};

class IndexError : public Error {
public:
    using Error::Error;
};

/// Non-finite intermediate, failed series/quadrature convergence, etc.
class NumericError : public Error {
public:
    using Error::Error;
};

/// Malformed or inconsistent input data (files, paths that are too short).
class DataError : public Error {
public:
    using Error::Error;
};

class InsufficientDataError : public DataError {
public:
    using DataError::DataError;
};

class CalibrationFailedError : public NumericError {
public:
    using NumericError::NumericError;
};

/// Implied volatility requested for a price outside the no-arbitrage band.
class NoSolutionError : public NumericError {
public:
    using NumericError::NumericError;
};

class TrainingFailedError : public NumericError {
public:
    using NumericError::NumericError;
};

}  // namespace rlhedge
