#pragma once

#include <stdexcept>
#include <string>

namespace rabi {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Bad input: malformed text, invalid configuration, rejected data.
class InputError : public Error {
public:
    using Error::Error;
};

/// A numerical procedure could not deliver a result at the requested accuracy.
class NumericalError : public Error {
public:
    using Error::Error;
};

class NonConvergedQuadrature : public NumericalError {
public:
    using NumericalError::NumericalError;
};

class Unreachable : public NumericalError {
public:
    using NumericalError::NumericalError;
};

class StepFailure : public NumericalError {
public:
    using NumericalError::NumericalError;
};

class InvariantBreach : public NumericalError {
public:
    using NumericalError::NumericalError;
};

class FitDiverged : public NumericalError {
public:
    using NumericalError::NumericalError;
};

class SingularJacobian : public NumericalError {
public:
    using NumericalError::NumericalError;
};

class DegenerateTail : public NumericalError {
public:
    using NumericalError::NumericalError;
};

/// The data carry no usable signal, so no fit can be trusted.
class DegenerateFit : public NumericalError {
public:
    using NumericalError::NumericalError;
};

class OutOfRange : public InputError {
public:
    using InputError::InputError;
};

class ParseError : public InputError {
public:
    ParseError(const std::string& what, int line, int column)
        : InputError("line " + std::to_string(line) + ", column " + std::to_string(column) + ": " +
                     what),
          line_(line),
          column_(column) {}

    int line() const { return line_; }
    int column() const { return column_; }

private:
    int line_;
    int column_;
};

class ValidationError : public InputError {
public:
    ValidationError(std::string key, const std::string& what)
        : InputError(key + ": " + what), key_(std::move(key)) {}

    const std::string& key() const { return key_; }

private:
    std::string key_;
};

class NonMonotonicTime : public InputError {
public:
    using InputError::InputError;
};

}  // namespace rabi
