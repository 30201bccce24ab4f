#pragma once

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace ealg {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A malformed instance (bad sizes, missing OP fields, non-finite coordinates).
class InstanceError : public Error {
public:
    using Error::Error;
};

/// A tour or route that is not a valid solution for its instance.
class InvalidSolutionError : public Error {
public:
    using Error::Error;
};

/// A generator or heuristic program that violates its grammar invariants.
/// `path()` names the offending node, e.g. `root.children[1]`.
class ProgramValidationError : public Error {
public:
    ProgramValidationError(std::string path, const std::string& message)
        : Error(path + ": " + message), path_(std::move(path)) {}

    const std::string& path() const noexcept { return path_; }

private:
    std::string path_;
};

/// Program target and instance kind (or solver) do not fit together.
class TypeError : public Error {
public:
    using Error::Error;
};

class SizeLimitError : public Error {
public:
    using Error::Error;
};

/// Gap or hardness measurement on degenerate input.
class MeasurementError : public Error {
public:
    using Error::Error;
};

/// A generation or solve failure inside a batch evaluation, tagged with the
/// seed of the instance that triggered it.
class EvaluationError : public Error {
public:
    EvaluationError(std::uint64_t seed, const std::string& message)
        : Error("instance seed " + std::to_string(seed) + ": " + message), seed_(seed) {}

    std::uint64_t seed() const noexcept { return seed_; }

private:
    std::uint64_t seed_;
};

/// Two evaluations that cannot be compared (different task, size or seeds).
class ComparisonError : public Error {
public:
    using Error::Error;
};

class ShapeError : public Error {
public:
    using Error::Error;
};

/// Text format errors. `line()` is 1-based, 0 when unknown.
class ParseError : public Error {
public:
    ParseError(const std::string& message, std::size_t line = 0)
        : Error(line ? "line " + std::to_string(line) + ": " + message : message), line_(line) {}

    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

/// A failed request to a model endpoint (connection, timeout, non-2xx
/// status, or an unreadable reply envelope). Retriable.
class TransportError : public Error {
public:
    using Error::Error;
};

} // namespace ealg
