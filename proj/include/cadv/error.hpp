#pragma once

#include <stdexcept>
#include <string>

namespace cadv {

// Base for every error this library reports. The CLI maps these to exit code 2.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Input does not respect the declared schema (unknown token, bad kind, ...).
class SchemaError : public Error {
public:
    using Error::Error;
};

// Malformed file contents (ragged CSV row, truncated binary file, ...).
class ParseError : public Error {
public:
    using Error::Error;
};

// Bad argument or precondition violation.
class ValidationError : public Error {
public:
    using Error::Error;
};

// A configured size cap (clause space, domain enumeration) would be exceeded.
class CapacityError : public Error {
public:
    using Error::Error;
};

// Training diverged.
class TrainingError : public Error {
public:
    using Error::Error;
};

} // namespace cadv
