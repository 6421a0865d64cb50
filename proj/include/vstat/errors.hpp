#pragma once

#include <stdexcept>
#include <string>

namespace vstat {

// Error categories surfaced by the library. The CLI maps each category to a
// fixed process exit code.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class InvalidInput : public Error {
public:
    using Error::Error;
};

// Log requested for a point within the cut tolerance of the base point's cut locus.
class CutLocusError : public Error {
public:
    using Error::Error;
};

// NaN/Inf produced where a finite value is required, or a solver breakdown.
class NumericalError : public Error {
public:
    using Error::Error;
};

// A modelling hypothesis (unique mean, positive definite Hessian) fails.
class HypothesisViolation : public Error {
public:
    using Error::Error;
};

class Unsupported : public Error {
public:
    using Error::Error;
};

}  // namespace vstat
