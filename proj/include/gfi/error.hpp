#pragma once

#include <stdexcept>
#include <string>

namespace gfi {

/// Base class of every error raised by the engine.
class Error : public std::runtime_error
{
public:
  using std::runtime_error::runtime_error;
};

/// Violated precondition or malformed configuration / input file.
class InvalidArgument : public Error
{
public:
  using Error::Error;
};

/// NaN or other failure while evaluating a model's likelihood or Jacobian.
class ModelEvaluationError : public Error
{
public:
  using Error::Error;
};

/// Sampler or importance weights broke down (no mixing, weight degeneracy,
/// too many failed replications).
class StatisticalFailure : public Error
{
public:
  using Error::Error;
};

} // namespace gfi
