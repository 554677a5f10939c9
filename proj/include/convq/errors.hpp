#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace convq {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed input file. Carries the 1-based line number of the offending row.
class ParseError : public Error {
public:
    ParseError(const std::string& path, std::size_t line, const std::string& what)
        : Error(path + ":" + std::to_string(line) + ": " + what), line_(line) {}
    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

/// A value lies outside its admissible domain (rating 6, speaking status 2, ...).
class DomainError : public Error {
public:
    using Error::Error;
};

/// Structural problem with a file or table (unknown column, missing id).
class SchemaError : public Error {
public:
    using Error::Error;
};

/// Statistic undefined for the input (zero variance, empty denominator).
class UndefinedError : public Error {
public:
    using Error::Error;
};

class RankDeficiencyError : public Error {
public:
    using Error::Error;
};

class ConvergenceError : public Error {
public:
    using Error::Error;
};

/// A cross-validation split cannot give every fold both classes.
class StratificationError : public Error {
public:
    using Error::Error;
};

/// Invalid argument or precondition violated by the caller.
class InputError : public Error {
public:
    using Error::Error;
};

}  // namespace convq
