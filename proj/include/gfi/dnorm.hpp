#pragma once

#include <gfi/error.hpp>

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numeric>
#include <string>
#include <string_view>
#include <vector>

namespace gfi {

/// n_k x p matrix of parameter derivatives of the data-generating equation,
/// one row per observation.
using JacobianMatrix = Eigen::MatrixXd;

/// The two canonical D functions turning a Jacobian matrix into J(y, theta).
enum class DNorm
{
  D2,   ///< product of singular values, sqrt(det(A^T A))
  DInf, ///< sum of |det| over all p-row submatrices
};

inline constexpr std::uint64_t default_enumeration_cap = 1'000'000;

/// Singular values below this fraction of the largest count as zero.
inline constexpr double rank_tolerance = 1e-12;

inline std::string to_string(DNorm n)
{
  return n == DNorm::D2 ? "d2" : "dinf";
}

inline DNorm parse_dnorm(std::string_view s)
{
  if (s == "d2" || s == "D2")
    return DNorm::D2;
  if (s == "dinf" || s == "DInf" || s == "d_inf")
    return DNorm::DInf;
  throw InvalidArgument("unknown D-norm '" + std::string(s) + "' (expected d2 or dinf)");
}

namespace detail {

inline void require_determined(const JacobianMatrix& a)
{
  if (a.cols() == 0)
    throw InvalidArgument("Jacobian matrix has no columns");
  if (a.rows() < a.cols())
    throw InvalidArgument("underdetermined Jacobian: " + std::to_string(a.rows()) +
                          " rows for " + std::to_string(a.cols()) + " parameters");
}

/// C(n, p), saturating at UINT64_MAX.
inline std::uint64_t binomial(std::uint64_t n, std::uint64_t p)
{
  if (p > n)
    return 0;
  p = std::min(p, n - p);
  constexpr auto saturated = std::numeric_limits<std::uint64_t>::max();
  std::uint64_t acc = 1;
  for (std::uint64_t i = 1; i <= p; ++i) {
    // acc * (n - p + i) is divisible by i; split the division to stay exact
    const std::uint64_t g = std::gcd(acc, i);
    const std::uint64_t factor = (n - p + i) / (i / g);
    acc /= g;
    if (acc > saturated / factor)
      return saturated;
    acc *= factor;
  }
  return acc;
}

} // namespace detail

/// log D2(A) via column-pivoted Householder QR: |det R| equals the product of
/// singular values, and the pivoted diagonal reveals rank. Returns -inf for a
/// rank-deficient matrix.
inline double log_d2(const JacobianMatrix& a)
{
  detail::require_determined(a);
  if (!a.allFinite())
    return -std::numeric_limits<double>::infinity();
  Eigen::ColPivHouseholderQR<JacobianMatrix> qr(a);
  const auto diag = qr.matrixQR().diagonal().cwiseAbs();
  const double largest = diag.maxCoeff();
  if (!(largest > 0.0))
    return -std::numeric_limits<double>::infinity();
  double acc = 0.0;
  for (Eigen::Index i = 0; i < diag.size(); ++i) {
    if (diag(i) < rank_tolerance * largest)
      return -std::numeric_limits<double>::infinity();
    acc += std::log(diag(i));
  }
  return acc;
}

inline double d2(const JacobianMatrix& a)
{
  return std::exp(log_d2(a));
}

/// log D_inf(A) = log sum_i |det(A_i)| over all p-row submatrices A_i.
///
/// Refuses (InvalidArgument) when C(n, p) exceeds `cap`; D_inf is meant for
/// small oracle problems and is never approximated.
inline double log_d_inf(const JacobianMatrix& a, std::uint64_t cap = default_enumeration_cap)
{
  detail::require_determined(a);
  const auto n = static_cast<std::uint64_t>(a.rows());
  const auto p = static_cast<std::uint64_t>(a.cols());
  const auto count = detail::binomial(n, p);
  if (count > cap)
    throw InvalidArgument("D_inf needs C(" + std::to_string(n) + ", " + std::to_string(p) +
                          ") submatrices, above the enumeration cap of " +
                          std::to_string(cap) + "; use the d2 norm instead");
  if (!a.allFinite())
    return -std::numeric_limits<double>::infinity();

  // Minors are accumulated in log space as a running log-sum-exp.
  std::vector<Eigen::Index> rows(p);
  for (std::uint64_t i = 0; i < p; ++i)
    rows[i] = static_cast<Eigen::Index>(i);
  const auto pp = static_cast<Eigen::Index>(p);
  Eigen::MatrixXd minor(pp, pp);
  double log_max = -std::numeric_limits<double>::infinity();
  double scaled_sum = 0.0;
  for (;;) {
    for (Eigen::Index r = 0; r < pp; ++r)
      minor.row(r) = a.row(rows[static_cast<std::size_t>(r)]);
    const double det = std::abs(pp == 1 ? minor(0, 0) : minor.partialPivLu().determinant());
    if (det > 0.0) {
      const double ld = std::log(det);
      if (ld > log_max) {
        scaled_sum = scaled_sum * std::exp(log_max - ld) + 1.0;
        log_max = ld;
      } else {
        scaled_sum += std::exp(ld - log_max);
      }
    }
    // advance to the next combination in lexicographic order
    std::int64_t i = static_cast<std::int64_t>(p) - 1;
    while (i >= 0 && rows[static_cast<std::size_t>(i)] ==
                         static_cast<Eigen::Index>(n - p) + i)
      --i;
    if (i < 0)
      break;
    ++rows[static_cast<std::size_t>(i)];
    for (auto j = static_cast<std::size_t>(i) + 1; j < p; ++j)
      rows[j] = rows[j - 1] + 1;
  }
  if (scaled_sum == 0.0)
    return -std::numeric_limits<double>::infinity();
  return log_max + std::log(scaled_sum);
}

inline double d_inf(const JacobianMatrix& a, std::uint64_t cap = default_enumeration_cap)
{
  return std::exp(log_d_inf(a, cap));
}

inline double log_dnorm(const JacobianMatrix& a, DNorm norm,
                        std::uint64_t cap = default_enumeration_cap)
{
  return norm == DNorm::D2 ? log_d2(a) : log_d_inf(a, cap);
}

} // namespace gfi
