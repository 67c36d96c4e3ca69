#pragma once

#include <gfi/combiner.hpp>
#include <gfi/error.hpp>
#include <gfi/math.hpp>

#include <json.hpp>

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace gfi {

/// Right-continuous (weighted) empirical CDF R_1(t) = P(theta_j <= t | y).
class StepCdf
{
public:
  StepCdf() = default;

  /// Equal weights.
  explicit StepCdf(std::vector<double> values) : values_(std::move(values))
  {
    if (values_.empty())
      throw InvalidArgument("empirical CDF of an empty sample");
    std::sort(values_.begin(), values_.end());
    const double n = static_cast<double>(values_.size());
    cumulative_.resize(values_.size());
    for (std::size_t i = 0; i < values_.size(); ++i)
      cumulative_[i] = static_cast<double>(i + 1) / n;
  }

  /// Weighted; `probabilities` must sum to 1.
  StepCdf(std::span<const double> values, std::span<const double> probabilities)
  {
    if (values.empty() || values.size() != probabilities.size())
      throw InvalidArgument("empirical CDF needs one probability per value");
    std::vector<std::size_t> order(values.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](auto a, auto b) { return values[a] < values[b]; });
    values_.reserve(values.size());
    cumulative_.reserve(values.size());
    double acc = 0.0;
    for (auto i : order) {
      acc += probabilities[i];
      values_.push_back(values[i]);
      cumulative_.push_back(acc);
    }
    for (auto& c : cumulative_)
      c /= acc;
  }

  double operator()(double t) const
  {
    const auto it = std::upper_bound(values_.begin(), values_.end(), t);
    if (it == values_.begin())
      return 0.0;
    return cumulative_[static_cast<std::size_t>(it - values_.begin()) - 1];
  }

  /// Generalized inverse inf{t : R(t) >= q}; ties resolve to the smaller t.
  double inverse(double q) const
  {
    // cumulative sums of 1/n carry rounding; accept a few ulps of slack
    const double target = q - 1e-12;
    const auto it = std::lower_bound(cumulative_.begin(), cumulative_.end(), target);
    if (it == cumulative_.end())
      return values_.back();
    return values_[static_cast<std::size_t>(it - cumulative_.begin())];
  }

  const std::vector<double>& sorted_values() const { return values_; }
  std::size_t size() const { return values_.size(); }

private:
  std::vector<double> values_;
  std::vector<double> cumulative_;
};

/// Values of column `coord` (or any derived scalar) with their normalized weights.
inline StepCdf marginal_cdf(const WeightedSample& sample, std::size_t coord)
{
  if (coord >= static_cast<std::size_t>(sample.particles.cols()))
    throw InvalidArgument("marginal_cdf: coordinate out of range");
  const Eigen::VectorXd col = sample.particles.col(static_cast<Eigen::Index>(coord));
  std::vector<double> values(col.data(), col.data() + col.size());
  const bool uniform = sample.log_weights.size() == 0 ||
                       (sample.log_weights.array() == sample.log_weights(0)).all();
  if (uniform)
    return StepCdf(std::move(values));
  const auto w = normalize_and_ess(sample.log_weights);
  return StepCdf(values, std::span<const double>(w.probabilities.data(),
                                                  static_cast<std::size_t>(w.probabilities.size())));
}

enum class Side
{
  lower,     ///< (-inf, R^-1(alpha)]: level-alpha bound from below the fiducial mass
  upper,     ///< [R^-1(1 - alpha), inf)
  two_sided, ///< [R^-1(alpha/2), R^-1(1 - alpha/2)], level 1 - alpha
};

struct Interval
{
  double lower;
  double upper;
};

inline Interval invert_ci(const StepCdf& cdf, double alpha, Side side)
{
  if (!(alpha > 0.0 && alpha < 1.0))
    throw InvalidArgument("invert_ci: alpha must lie in (0, 1)");
  constexpr double inf = std::numeric_limits<double>::infinity();
  switch (side) {
  case Side::lower:
    return {-inf, cdf.inverse(alpha)};
  case Side::upper:
    return {cdf.inverse(1.0 - alpha), inf};
  case Side::two_sided:
    return {cdf.inverse(alpha / 2.0), cdf.inverse(1.0 - alpha / 2.0)};
  }
  return {-inf, inf};
}

struct CurvePoint
{
  double t;
  double value;
};

/// cc(t) = |2 R(t) - 1|; its level-g crossings bracket the central g interval.
inline std::vector<CurvePoint> confidence_curve(const StepCdf& cdf, std::span<const double> grid)
{
  if (!std::is_sorted(grid.begin(), grid.end()))
    throw InvalidArgument("confidence_curve: grid must be sorted");
  std::vector<CurvePoint> out;
  out.reserve(grid.size());
  for (double t : grid)
    out.push_back({t, std::abs(2.0 * cdf(t) - 1.0)});
  return out;
}

namespace detail {

/// Linear-interpolation sample quantile of sorted values.
inline double sorted_quantile(const std::vector<double>& sorted, double q)
{
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (pos - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

} // namespace detail

/// Silverman's rule 0.9 min(sd, IQR/1.34) n^{-1/5}; whichever spread is
/// positive is used when the other vanishes.
inline double silverman_bandwidth(std::span<const double> values)
{
  const auto n = values.size();
  if (n < 2)
    throw InvalidArgument("degenerate sample: need at least two values for a bandwidth");
  std::vector<double> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());
  const double mean = std::accumulate(sorted.begin(), sorted.end(), 0.0) / static_cast<double>(n);
  double ss = 0.0;
  for (double v : sorted)
    ss += (v - mean) * (v - mean);
  const double sd = std::sqrt(ss / static_cast<double>(n - 1));
  const double iqr = detail::sorted_quantile(sorted, 0.75) - detail::sorted_quantile(sorted, 0.25);
  double spread = std::min(sd, iqr / 1.34);
  if (!(spread > 0.0))
    spread = std::max(sd, iqr / 1.34);
  const double h = 0.9 * spread * std::pow(static_cast<double>(n), -0.2);
  if (!(h > 0.0))
    throw InvalidArgument("degenerate sample: zero bandwidth (all values equal)");
  return h;
}

/// Gaussian-kernel density estimate on `grid`.
inline std::vector<double> kde(std::span<const double> values, std::span<const double> grid,
                               std::optional<double> bandwidth = std::nullopt)
{
  const double h = bandwidth ? *bandwidth : silverman_bandwidth(values);
  if (!(h > 0.0))
    throw InvalidArgument("degenerate sample: zero bandwidth");
  const double norm = 1.0 / (static_cast<double>(values.size()) * h);
  std::vector<double> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());
  std::vector<double> out;
  out.reserve(grid.size());
  // kernel mass beyond 9 bandwidths is below 1e-17
  const double reach = 9.0 * h;
  for (double t : grid) {
    auto lo = std::lower_bound(sorted.begin(), sorted.end(), t - reach);
    auto hi = std::upper_bound(sorted.begin(), sorted.end(), t + reach);
    double acc = 0.0;
    for (auto it = lo; it != hi; ++it)
      acc += math::normal_pdf((t - *it) / h);
    out.push_back(acc * norm);
  }
  return out;
}

inline std::vector<double> linspace(double a, double b, std::size_t n)
{
  std::vector<double> out(n);
  if (n == 1) {
    out[0] = a;
    return out;
  }
  for (std::size_t i = 0; i < n; ++i)
    out[i] = a + (b - a) * static_cast<double>(i) / static_cast<double>(n - 1);
  return out;
}

/// Inference summary of one scalar (a coordinate of theta or a derived quantity).
struct FiducialSummary
{
  std::string name;
  std::size_t coord = 0;
  StepCdf cdf;
  double mean = 0.0;
  double sd = 0.0;
  std::vector<std::pair<double, double>> one_sided; ///< (alpha, R^-1(alpha))
  std::vector<std::pair<double, Interval>> two_sided; ///< (level, interval)
  std::vector<CurvePoint> curve;
  std::vector<double> kde_grid;
  std::vector<double> kde_density;
  double bandwidth = 0.0;
};

struct SummaryOptions
{
  std::vector<double> alphas = {0.01, 0.025, 0.05, 0.1, 0.25, 0.5, 0.75, 0.9, 0.95, 0.975, 0.99};
  std::vector<double> levels = {0.5, 0.8, 0.9, 0.95, 0.99};
  std::size_t grid_points = 201;
};

/// Summary of a scalar sample with normalized weights.
inline FiducialSummary summarize_values(std::string name, std::size_t coord,
                                        const std::vector<double>& values,
                                        const Eigen::VectorXd& probabilities,
                                        const SummaryOptions& opts = {})
{
  FiducialSummary s;
  s.name = std::move(name);
  s.coord = coord;
  s.cdf = StepCdf(values, std::span<const double>(probabilities.data(),
                                                 static_cast<std::size_t>(probabilities.size())));
  double mean = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i)
    mean += probabilities(static_cast<Eigen::Index>(i)) * values[i];
  double var = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i)
    var += probabilities(static_cast<Eigen::Index>(i)) * (values[i] - mean) * (values[i] - mean);
  s.mean = mean;
  s.sd = std::sqrt(var);
  for (double a : opts.alphas)
    s.one_sided.emplace_back(a, invert_ci(s.cdf, a, Side::lower).upper);
  for (double l : opts.levels)
    s.two_sided.emplace_back(l, invert_ci(s.cdf, 1.0 - l, Side::two_sided));

  const auto& sorted = s.cdf.sorted_values();
  const double lo = sorted.front();
  const double hi = sorted.back();
  try {
    // The KDE treats the sample as equally weighted, so weighted inputs are
    // represented by their systematic resample.
    std::vector<double> kde_values;
    const bool uniform = (probabilities.array() == probabilities(0)).all();
    if (uniform) {
      kde_values = values;
    } else {
      const auto idx = systematic_indices(probabilities, values.size(), 0x6b6465);
      for (auto i : idx)
        kde_values.push_back(values[i]);
    }
    s.bandwidth = silverman_bandwidth(kde_values);
    s.kde_grid = linspace(lo - 4.0 * s.bandwidth, hi + 4.0 * s.bandwidth, opts.grid_points);
    s.kde_density = kde(kde_values, s.kde_grid, s.bandwidth);
  } catch (const InvalidArgument&) {
    s.bandwidth = 0.0;
  }
  const auto curve_grid = s.kde_grid.empty() ? linspace(lo, hi, opts.grid_points) : s.kde_grid;
  s.curve = confidence_curve(s.cdf, curve_grid);
  return s;
}

/// One summary per coordinate, followed by one per derived quantity.
inline std::vector<FiducialSummary> summarize(const WeightedSample& sample,
                                              const std::vector<std::string>& names,
                                              const std::vector<DerivedQuantity>& derived = {},
                                              const SummaryOptions& opts = {})
{
  const Eigen::VectorXd probs = normalize_and_ess(sample.log_weights).probabilities;
  std::vector<FiducialSummary> out;
  const auto p = static_cast<std::size_t>(sample.particles.cols());
  for (std::size_t j = 0; j < p; ++j) {
    const Eigen::VectorXd col = sample.particles.col(static_cast<Eigen::Index>(j));
    std::vector<double> values(col.data(), col.data() + col.size());
    out.push_back(summarize_values(j < names.size() ? names[j] : "theta" + std::to_string(j + 1), j,
                                   values, probs, opts));
  }
  for (std::size_t d = 0; d < derived.size(); ++d) {
    std::vector<double> values;
    values.reserve(sample.size());
    try {
      for (Eigen::Index t = 0; t < sample.particles.rows(); ++t)
        values.push_back(derived[d].fn(sample.particles.row(t).transpose()));
    } catch (const InvalidArgument&) {
      continue; // undefined for part of the sample; not reported
    }
    out.push_back(summarize_values(derived[d].name, p + d, values, probs, opts));
  }
  return out;
}

inline nlohmann::ordered_json to_json(const FiducialSummary& s)
{
  nlohmann::ordered_json j;
  j["name"] = s.name;
  j["mean"] = s.mean;
  j["sd"] = s.sd;
  auto& one = j["one_sided"] = nlohmann::ordered_json::array();
  for (const auto& [a, b] : s.one_sided)
    one.push_back({{"alpha", a}, {"bound", b}});
  auto& two = j["two_sided"] = nlohmann::ordered_json::array();
  for (const auto& [l, iv] : s.two_sided)
    two.push_back({{"level", l}, {"lower", iv.lower}, {"upper", iv.upper}});
  std::vector<double> ct, cv;
  for (const auto& c : s.curve) {
    ct.push_back(c.t);
    cv.push_back(c.value);
  }
  j["confidence_curve"] = {{"t", ct}, {"cc", cv}};
  j["kde"] = {{"bandwidth", s.bandwidth}, {"t", s.kde_grid}, {"density", s.kde_density}};
  return j;
}

/// Curve export: `name,t,cc,density` (density empty where no KDE grid).
inline void write_curves_csv(std::ostream& os, std::span<const FiducialSummary> summaries)
{
  os << "name,t,cc,density\n";
  for (const auto& s : summaries)
    for (std::size_t i = 0; i < s.curve.size(); ++i) {
      os << s.name << "," << detail::format_double(s.curve[i].t) << ","
         << detail::format_double(s.curve[i].value) << ",";
      if (i < s.kde_density.size())
        os << detail::format_double(s.kde_density[i]);
      os << "\n";
    }
}

} // namespace gfi
