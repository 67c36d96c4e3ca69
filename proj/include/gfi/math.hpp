#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

namespace gfi::math {

inline constexpr double log_sqrt_2pi = 0.91893853320467274178;
inline constexpr double inv_sqrt_2pi = 0.39894228040143267794;

inline double normal_pdf(double z) { return inv_sqrt_2pi * std::exp(-0.5 * z * z); }

inline double normal_log_pdf(double z) { return -0.5 * z * z - log_sqrt_2pi; }

inline double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

/// Phi(b) - Phi(a) for a <= b, without cancellation in either tail.
inline double normal_interval(double a, double b)
{
  if (a > 0.0)
    return 0.5 * (std::erfc(a / std::numbers::sqrt2) - std::erfc(b / std::numbers::sqrt2));
  if (b < 0.0)
    return 0.5 * (std::erfc(-b / std::numbers::sqrt2) - std::erfc(-a / std::numbers::sqrt2));
  return normal_cdf(b) - normal_cdf(a);
}

inline double log_add_exp(double a, double b)
{
  if (a == -std::numeric_limits<double>::infinity())
    return b;
  if (b == -std::numeric_limits<double>::infinity())
    return a;
  const double m = std::max(a, b);
  return m + std::log1p(std::exp(-std::abs(a - b)));
}

/// log sum exp(v); -inf for an empty or all -inf vector.
inline double log_sum_exp(const Eigen::Ref<const Eigen::VectorXd>& v)
{
  if (v.size() == 0)
    return -std::numeric_limits<double>::infinity();
  const double m = v.maxCoeff();
  if (m == -std::numeric_limits<double>::infinity())
    return m;
  if (m == std::numeric_limits<double>::infinity())
    return m;
  return m + std::log((v.array() - m).exp().sum());
}

inline double logit(double p) { return std::log(p) - std::log1p(-p); }

inline double sigmoid(double x)
{
  if (x >= 0.0)
    return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

/// log(sigmoid(x)) and log(1 - sigmoid(x)) without underflow.
inline double log_sigmoid(double x)
{
  return x >= 0.0 ? -std::log1p(std::exp(-x)) : x - std::log1p(std::exp(x));
}

inline double log1m_sigmoid(double x) { return log_sigmoid(-x); }

} // namespace gfi::math
