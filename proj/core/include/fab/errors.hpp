#pragma once

#include <stdexcept>
#include <string>

namespace fab {

// A design or covariance matrix is numerically rank deficient.
class RankError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

// A model fit could not produce a usable estimate.
class FitError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

// A positive-definite factorization failed beyond the jitter retry.
class ConditioningError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

// A logistic fit diverged, indicating (near-)separable data.
class SeparationError : public FitError {
  public:
    using FitError::FitError;
};

} // namespace fab
