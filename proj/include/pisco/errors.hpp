#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace pisco {

/// Base class for every error raised by the library. `exit_code()` is the
/// process status the CLI reports for it.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
    virtual int exit_code() const noexcept { return 2; }
};

/// Bad shapes, out-of-range parameters, malformed configs.
class InvalidArgument : public Error {
public:
    using Error::Error;
};

class InvalidSpec : public InvalidArgument {
public:
    using InvalidArgument::InvalidArgument;
};

class InvalidSplit : public InvalidArgument {
public:
    using InvalidArgument::InvalidArgument;
};

class DegenerateRegression : public InvalidArgument {
public:
    using InvalidArgument::InvalidArgument;
};

class NumericalFailure : public Error {
public:
    using Error::Error;
    int exit_code() const noexcept override { return 3; }
};

class EntanglerConstruction : public NumericalFailure {
public:
    using NumericalFailure::NumericalFailure;
};

class TrainingDivergence : public NumericalFailure {
public:
    TrainingDivergence(const std::string& what, std::size_t iteration)
        : NumericalFailure(what), iteration_(iteration) {}
    std::size_t iteration() const noexcept { return iteration_; }

private:
    std::size_t iteration_;
};

/// The stacked style differences leave fewer than `k` directions free.
class InsufficientNullSpace : public NumericalFailure {
public:
    InsufficientNullSpace(std::size_t requested, std::size_t feasible)
        : NumericalFailure("insufficient null space: requested k = " + std::to_string(requested) +
                           " but the style differences leave only " + std::to_string(feasible) +
                           " invariant directions; use k <= " + std::to_string(feasible)),
          requested_(requested),
          feasible_(feasible) {}
    std::size_t requested() const noexcept { return requested_; }
    std::size_t feasible() const noexcept { return feasible_; }

private:
    std::size_t requested_;
    std::size_t feasible_;
};

class IoError : public Error {
public:
    using Error::Error;
    int exit_code() const noexcept override { return 4; }
};

}  // namespace pisco
