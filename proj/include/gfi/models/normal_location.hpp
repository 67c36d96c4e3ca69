#pragma once

#include <gfi/math.hpp>
#include <gfi/model.hpp>
#include <gfi/rng.hpp>

#include <cmath>

namespace gfi {

/// N(mu, s^2) with known s; theta = (mu). Small oracle problems only: the
/// full-data fiducial distribution is N(mean(y), s^2 / n).
class NormalLocation final : public Model
{
public:
  explicit NormalLocation(double sigma = 1.0) : sigma_(sigma)
  {
    if (!(sigma > 0.0) || !std::isfinite(sigma))
      throw InvalidArgument("normal: sigma must be positive");
  }

  std::string name() const override { return "normal"; }
  std::size_t dim() const override { return 1; }
  std::vector<std::string> parameter_names() const override { return {"mu"}; }

  bool in_support(const ParamVector& t) const override { return t.size() == 1 && std::isfinite(t(0)); }
  ParamVector to_unconstrained(const ParamVector& t) const override { return t; }
  ParamVector from_unconstrained(const ParamVector& e) const override { return e; }
  double log_abs_det_transform(const ParamVector&) const override { return 0.0; }

  double log_likelihood(const Dataset& d, const ParamVector& t) const override
  {
    check_dimension(t);
    const auto z = (d.y.array() - t(0)) / sigma_;
    return -0.5 * z.square().sum() -
           static_cast<double>(d.y.size()) * (std::log(sigma_) + math::log_sqrt_2pi);
  }

  JacobianMatrix jacobian(const Dataset& d, const ParamVector& t) const override
  {
    check_dimension(t);
    return JacobianMatrix::Ones(d.y.size(), 1);
  }

  Dataset simulate(const ParamVector& t, std::size_t n, std::uint64_t seed) const override
  {
    check_dimension(t);
    Rng rng(seed);
    Dataset d;
    d.y.resize(static_cast<Eigen::Index>(n));
    d.x.resize(static_cast<Eigen::Index>(n), 0);
    for (Eigen::Index i = 0; i < d.y.size(); ++i)
      d.y(i) = t(0) + sigma_ * rng.normal();
    return d;
  }

  ParamVector initial_guess(const Dataset& d) const override
  {
    return ParamVector::Constant(1, d.y.size() > 0 ? d.y.mean() : 0.0);
  }

private:
  double sigma_;
};

} // namespace gfi
