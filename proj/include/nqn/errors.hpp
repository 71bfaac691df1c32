#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace nqn {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class DimensionMismatch : public Error {
public:
    DimensionMismatch(std::size_t expected, std::size_t got)
        : Error("dimension mismatch: expected " + std::to_string(expected) + ", got " +
                std::to_string(got)) {}
};

class NotPositiveDefinite : public Error {
public:
    using Error::Error;
};

class AsymmetricHessian : public Error {
public:
    using Error::Error;
};

class SingularCapacitance : public Error {
public:
    using Error::Error;
};

/// A denominator in a direction formula fell below the safeguard.
class DegenerateDenominator : public Error {
public:
    using Error::Error;
};

class CurvatureBreakdown : public Error {
public:
    using Error::Error;
};

class ZeroGradient : public Error {
public:
    ZeroGradient() : Error("zero gradient") {}
};

class ZeroDirection : public Error {
public:
    ZeroDirection() : Error("zero search direction") {}
};

/// Too many scenario matrices failed positivity for the exclusion budget.
class ScenarioBreakdown : public Error {
public:
    ScenarioBreakdown(std::size_t broken, std::size_t budget)
        : Error("scenario breakdown: " + std::to_string(broken) +
                " scenarios failed, budget " + std::to_string(budget)),
          broken_count(broken) {}
    std::size_t broken_count;
};

class EmptyResults : public Error {
public:
    EmptyResults() : Error("no results to aggregate") {}
};

class InvalidArgument : public Error {
public:
    using Error::Error;
};

class ParseError : public Error {
public:
    using Error::Error;
};

} // namespace nqn
