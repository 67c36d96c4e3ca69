#pragma once

#include <gfi/math.hpp>
#include <gfi/model.hpp>
#include <gfi/rng.hpp>

#include <cmath>
#include <limits>

namespace gfi {

inline constexpr double gpd_shape_epsilon = 1e-8;

/// Quantile at probability `prob` of a generalized-Pareto exceedance model:
/// threshold u, scale sigma_g, shape xi and exceedance rate zeta.
///
/// Only probabilities inside the exceedance regime (prob > 1 - zeta) are
/// answered; prob == 1 - zeta maps to the threshold itself.
inline double gpd_tail_quantile(double threshold, double scale, double shape, double rate,
                                double prob)
{
  if (!(scale > 0.0) || !(rate > 0.0 && rate < 1.0) || !(prob > 0.0 && prob < 1.0))
    throw InvalidArgument("gpd_tail_quantile: need scale > 0, rate in (0,1), prob in (0,1)");
  double tail = (1.0 - prob) / rate;
  if (tail > 1.0 + 1e-12)
    throw InvalidArgument("quantile below threshold regime: prob " + std::to_string(prob) +
                          " < 1 - rate " + std::to_string(1.0 - rate));
  tail = std::min(tail, 1.0);
  if (std::abs(shape) < gpd_shape_epsilon)
    return threshold - scale * std::log(tail);
  return threshold + scale / shape * (std::pow(tail, -shape) - 1.0);
}

/// Peaks-over-threshold model with a fixed threshold u.
///
/// theta = (sigma_g, xi, zeta). Observations above u are exceedances
/// u + GPD(sigma_g, xi); the rest only inform the exceedance rate zeta through
/// a Bernoulli likelihood. The Jacobian rows cover (sigma_g, xi) for the
/// exceedances; zeta enters through the binomial fiducial factor
/// zeta^{-1/2} (1 - zeta)^{-1/2}, so the fiducial distribution of zeta given m
/// exceedances in n observations is Beta(m + 1/2, n - m + 1/2).
///
/// Sampling space: (log sigma_g, xi, logit zeta).
class GpdTail final : public Model
{
public:
  GpdTail(double threshold, double tail_prob = 0.999) : threshold_(threshold), tail_prob_(tail_prob)
  {
    if (!std::isfinite(threshold))
      throw InvalidArgument("gpd: threshold must be finite");
    if (!(tail_prob > 0.0 && tail_prob < 1.0))
      throw InvalidArgument("gpd: tail probability must lie in (0, 1)");
  }

  std::string name() const override { return "gpd"; }
  std::size_t dim() const override { return 3; }
  std::vector<std::string> parameter_names() const override { return {"scale", "shape", "rate"}; }
  double threshold() const { return threshold_; }
  double tail_prob() const { return tail_prob_; }

  bool in_support(const ParamVector& t) const override
  {
    return t.size() == 3 && t.allFinite() && t(0) > 0.0 && t(2) > 0.0 && t(2) < 1.0;
  }

  ParamVector to_unconstrained(const ParamVector& t) const override
  {
    return ParamVector{{std::log(t(0)), t(1), math::logit(t(2))}};
  }

  ParamVector from_unconstrained(const ParamVector& e) const override
  {
    return ParamVector{{std::exp(e(0)), e(1), math::sigmoid(e(2))}};
  }

  double log_abs_det_transform(const ParamVector& e) const override
  {
    return e(0) + math::log_sigmoid(e(2)) + math::log1m_sigmoid(e(2));
  }

  /// log density of an exceedance z = y - u > 0; -inf outside the GPD support.
  static double exceedance_log_density(double z, double scale, double shape)
  {
    const double a = shape * z / scale;
    if (std::abs(shape) < gpd_shape_epsilon)
      return -std::log(scale) - z / scale;
    if (a <= -1.0)
      return neg_inf;
    return -std::log(scale) - (1.0 + 1.0 / shape) * std::log1p(a);
  }

  double log_likelihood(const Dataset& d, const ParamVector& t) const override
  {
    check_dimension(t);
    if (!in_support(t))
      return neg_inf;
    double acc = 0.0;
    Eigen::Index m = 0;
    for (Eigen::Index i = 0; i < d.y.size(); ++i) {
      const double z = d.y(i) - threshold_;
      if (z <= 0.0)
        continue;
      ++m;
      const double l = exceedance_log_density(z, t(0), t(1));
      if (l == neg_inf)
        return neg_inf;
      acc += l;
    }
    const auto n = d.y.size();
    return acc + static_cast<double>(m) * std::log(t(2)) +
           static_cast<double>(n - m) * std::log1p(-t(2));
  }

  /// (dG/dscale, dG/dshape) at the exceedance z, where
  /// G = u + scale/shape ((1 - V)^{-shape} - 1).
  static Eigen::RowVector2d jacobian_row(double z, double scale, double shape)
  {
    const double a = shape * z / scale;
    const double d_scale = z / scale;
    double d_shape;
    if (std::abs(a) < 1e-3) {
      d_shape = z * z / scale * (0.5 - a / 6.0 + a * a / 12.0 - a * a * a / 20.0);
    } else {
      const double s = 1.0 + a;
      d_shape = -z / shape + scale * s * std::log(s) / (shape * shape);
    }
    return {d_scale, d_shape};
  }

  JacobianMatrix jacobian(const Dataset& d, const ParamVector& t) const override
  {
    check_dimension(t);
    Eigen::Index m = 0;
    for (Eigen::Index i = 0; i < d.y.size(); ++i)
      m += d.y(i) > threshold_ ? 1 : 0;
    JacobianMatrix a(m, 2);
    Eigen::Index r = 0;
    for (Eigen::Index i = 0; i < d.y.size(); ++i) {
      const double z = d.y(i) - threshold_;
      if (z <= 0.0)
        continue;
      if (1.0 + t(1) * z / t(0) <= 0.0)
        a.row(r++).setConstant(std::numeric_limits<double>::quiet_NaN());
      else
        a.row(r++) = jacobian_row(z, t(0), t(1));
    }
    return a;
  }

  double log_jacobian_extra(const Dataset&, const ParamVector& t) const override
  {
    return -0.5 * (std::log(t(2)) + std::log1p(-t(2)));
  }

  /// Exceedances with probability zeta, otherwise u - Exp(1) * sigma_g.
  Dataset simulate(const ParamVector& t, std::size_t n, std::uint64_t seed) const override
  {
    check_dimension(t);
    if (!in_support(t))
      throw InvalidArgument("gpd: simulation parameters outside support");
    Rng rng(seed);
    Dataset d;
    d.y.resize(static_cast<Eigen::Index>(n));
    d.x.resize(static_cast<Eigen::Index>(n), 0);
    for (Eigen::Index i = 0; i < d.y.size(); ++i) {
      if (rng.uniform() < t(2)) {
        const double v = rng.uniform();
        d.y(i) = std::abs(t(1)) < gpd_shape_epsilon
                     ? threshold_ - t(0) * std::log(v)
                     : threshold_ + t(0) / t(1) * (std::pow(v, -t(1)) - 1.0);
      } else {
        d.y(i) = threshold_ - t(0) * rng.exponential();
      }
    }
    return d;
  }

  ParamVector initial_guess(const Dataset& d) const override
  {
    double sum = 0.0;
    Eigen::Index m = 0;
    double zmax = 0.0;
    for (Eigen::Index i = 0; i < d.y.size(); ++i) {
      const double z = d.y(i) - threshold_;
      if (z > 0.0) {
        sum += z;
        zmax = std::max(zmax, z);
        ++m;
      }
    }
    const double n = static_cast<double>(std::max<Eigen::Index>(d.y.size(), 1));
    const double rate = std::clamp((static_cast<double>(m) + 0.5) / (n + 1.0), 1e-6, 1.0 - 1e-6);
    const double mean = m > 0 ? sum / static_cast<double>(m) : 1.0;
    const double shape = 0.1;
    return ParamVector{{std::max(mean * (1.0 - shape), 1e-6), shape, rate}};
  }

  double quantile(const ParamVector& t) const
  {
    return gpd_tail_quantile(threshold_, t(0), t(1), t(2), tail_prob_);
  }

  std::vector<DerivedQuantity> derived_quantities() const override
  {
    return {{"quantile", [this](const ParamVector& t) { return quantile(t); }}};
  }

private:
  double threshold_;
  double tail_prob_;
};

} // namespace gfi
