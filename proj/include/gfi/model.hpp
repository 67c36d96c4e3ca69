#pragma once

#include <gfi/data.hpp>
#include <gfi/dnorm.hpp>
#include <gfi/error.hpp>

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <string>
#include <utility>
#include <vector>

namespace gfi {

/// Log of the unnormalized fiducial density as a function of theta.
using LogDensityFn = std::function<double(const ParamVector&)>;

/// A named scalar function of theta reported alongside the parameters
/// (e.g. a tail quantile).
struct DerivedQuantity
{
  std::string name;
  std::function<double(const ParamVector&)> fn;
};

/// Pluggable model: log f(y; theta), the Jacobian rows of the data-generating
/// equation Y = G(theta, U), support, an unconstrained reparameterization
/// used by the sampler, and a seeded simulator.
///
/// Implementations are immutable after construction and safe to share
/// between worker threads.
class Model
{
public:
  virtual ~Model() = default;

  virtual std::string name() const = 0;
  virtual std::size_t dim() const = 0;
  virtual std::vector<std::string> parameter_names() const = 0;
  /// Number of covariate columns expected in the data.
  virtual std::size_t covariates() const { return 0; }

  virtual bool in_support(const ParamVector& theta) const = 0;

  /// Map from constrained theta to the unconstrained sampling space.
  virtual ParamVector to_unconstrained(const ParamVector& theta) const = 0;
  virtual ParamVector from_unconstrained(const ParamVector& eta) const = 0;
  /// log |d theta / d eta| at eta.
  virtual double log_abs_det_transform(const ParamVector& eta) const = 0;

  /// log f(y_k; theta) summed over the subset; -inf outside the support.
  virtual double log_likelihood(const Dataset& data, const ParamVector& theta) const = 0;

  /// Rows d G / d theta at u = G^{-1}(y_i, theta), one per contributing
  /// observation. May have fewer columns than dim() when part of theta enters
  /// only through log_jacobian_extra.
  virtual JacobianMatrix jacobian(const Dataset& data, const ParamVector& theta) const = 0;

  /// Additional log-Jacobian factor not expressed through jacobian().
  virtual double log_jacobian_extra(const Dataset&, const ParamVector&) const { return 0.0; }

  virtual Dataset simulate(const ParamVector& theta, std::size_t n, std::uint64_t seed) const = 0;

  /// Moment-based starting point for the likelihood search.
  virtual ParamVector initial_guess(const Dataset& data) const = 0;

  virtual std::vector<DerivedQuantity> derived_quantities() const { return {}; }

  /// log f(y_k; theta_t) for every particle row. Workers answer merge
  /// requests through this, so it is the only likelihood entry point the
  /// combiner uses.
  virtual Eigen::VectorXd log_likelihoods(const Dataset& data,
                                          const ParticleMatrix& particles) const
  {
    Eigen::VectorXd out(particles.rows());
    for (Eigen::Index t = 0; t < particles.rows(); ++t)
      out(t) = log_likelihood(data, particles.row(t).transpose());
    return out;
  }

  /// Subset-bound log fiducial density. Models override this when the data
  /// allow precomputation; the result must agree with log_fiducial_density.
  virtual LogDensityFn fiducial_target(const Dataset& data, DNorm norm,
                                       std::uint64_t cap = default_enumeration_cap) const;

  void check_dimension(const ParamVector& theta) const
  {
    if (static_cast<std::size_t>(theta.size()) != dim())
      throw InvalidArgument(name() + ": parameter vector has length " +
                            std::to_string(theta.size()) + ", expected " +
                            std::to_string(dim()));
  }
};

inline constexpr double neg_inf = -std::numeric_limits<double>::infinity();

/// log J(y, theta) = log D(jacobian) + extra factor.
inline double log_jacobian(const Model& model, const Dataset& data, const ParamVector& theta,
                           DNorm norm, std::uint64_t cap = default_enumeration_cap)
{
  const JacobianMatrix a = model.jacobian(data, theta);
  if (a.rows() < a.cols())
    throw InvalidArgument("underdetermined Jacobian: " + std::to_string(a.rows()) +
                          " rows for " + std::to_string(a.cols()) + " parameters");
  const double base = log_dnorm(a, norm, cap);
  if (base == neg_inf)
    return neg_inf;
  return base + model.log_jacobian_extra(data, theta);
}

/// Unnormalized log generalized fiducial density log f(y_k; theta) + log J(y_k, theta).
///
/// Outside the support the value is -inf. A NaN likelihood raises
/// ModelEvaluationError; fewer Jacobian rows than parameters raises
/// InvalidArgument ("underdetermined Jacobian").
inline double log_fiducial_density(const Model& model, const Dataset& data,
                                   const ParamVector& theta, DNorm norm = DNorm::D2,
                                   std::uint64_t cap = default_enumeration_cap)
{
  model.check_dimension(theta);
  if (!theta.allFinite() || !model.in_support(theta))
    return neg_inf;
  const double ll = model.log_likelihood(data, theta);
  if (std::isnan(ll))
    throw ModelEvaluationError(model.name() + ": model evaluation failure (NaN likelihood)");
  // Check the Jacobian shape before any early exit so the precondition is
  // enforced independently of theta.
  const double lj = log_jacobian(model, data, theta, norm, cap);
  if (ll == neg_inf || lj == neg_inf)
    return neg_inf;
  return ll + lj;
}

inline double log_fiducial_density(const Model& model, const DataSubset& subset,
                                   const ParamVector& theta, DNorm norm = DNorm::D2,
                                   std::uint64_t cap = default_enumeration_cap)
{
  return log_fiducial_density(model, subset.data, theta, norm, cap);
}

inline LogDensityFn Model::fiducial_target(const Dataset& data, DNorm norm,
                                           std::uint64_t cap) const
{
  return [this, &data, norm, cap](const ParamVector& theta) {
    return log_fiducial_density(*this, data, theta, norm, cap);
  };
}

} // namespace gfi
