#pragma once

#include <stdexcept>
#include <string>

namespace mmgs {

/// Violated precondition of an operation (wrong shape, non-scalar loss, ...).
class ContractViolation : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

/// Malformed or inconsistent input data: files, schemas, checkpoints.
class FormatError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Schema violation located by a JSON pointer into the offending document.
class SchemaError : public FormatError {
public:
    SchemaError(std::string pointer, const std::string& message)
        : FormatError(pointer + ": " + message), pointer_(std::move(pointer)) {}

    const std::string& pointer() const noexcept { return pointer_; }

private:
    std::string pointer_;
};

/// Numerical failure during optimization (non-finite loss, diverged state).
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

} // namespace mmgs
