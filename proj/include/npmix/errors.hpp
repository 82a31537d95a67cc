#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace npmix {

// Base of every error thrown by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class NotPositiveDefinite : public Error {
public:
    explicit NotPositiveDefinite(std::ptrdiff_t pivot)
        : Error("matrix is not positive definite (pivot " + std::to_string(pivot) + ")"),
          pivot_(pivot) {}
    std::ptrdiff_t pivot() const noexcept { return pivot_; }

private:
    std::ptrdiff_t pivot_;
};

class NonConvergence : public Error {
public:
    using Error::Error;
};

// No observation carries positive kernel weight at a target covariate value.
class AllWeightsZero : public Error {
public:
    explicit AllWeightsZero(double z)
        : Error("all kernel weights are zero at z = " + std::to_string(z)), z_(z) {}
    double z() const noexcept { return z_; }

private:
    double z_;
};

class DegenerateScatter : public Error {
public:
    using Error::Error;
};

class DegenerateComponent : public Error {
public:
    using Error::Error;
};

class AllInitializationsFailed : public Error {
public:
    using Error::Error;
};

class EmptyGrid : public Error {
public:
    using Error::Error;
};

class DimensionMismatch : public Error {
public:
    using Error::Error;
};

class NotEnoughEdges : public Error {
public:
    using Error::Error;
};

// Malformed user input (CSV, config, model files).
class InvalidInput : public Error {
public:
    using Error::Error;
};

}  // namespace npmix
