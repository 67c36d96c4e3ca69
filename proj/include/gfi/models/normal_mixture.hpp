#pragma once

#include <gfi/math.hpp>
#include <gfi/model.hpp>
#include <gfi/rng.hpp>

#include <algorithm>
#include <cmath>
#include <vector>

namespace gfi {

/// Two-component normal mixture gamma N(mu1, s^2) + (1 - gamma) N(mu2, s^2)
/// with known common scale s. theta = (mu1, mu2, gamma), mu1 < mu2.
///
/// Sampling space: (mu1, log(mu2 - mu1), logit gamma).
class NormalMixture final : public Model
{
public:
  explicit NormalMixture(double sigma = 1.0) : sigma_(sigma)
  {
    if (!(sigma > 0.0) || !std::isfinite(sigma))
      throw InvalidArgument("mixture: sigma must be positive");
  }

  std::string name() const override { return "mixture"; }
  std::size_t dim() const override { return 3; }
  std::vector<std::string> parameter_names() const override { return {"mu1", "mu2", "gamma"}; }
  double sigma() const { return sigma_; }

  bool in_support(const ParamVector& t) const override
  {
    return t.size() == 3 && t.allFinite() && t(0) < t(1) && t(2) > 0.0 && t(2) < 1.0;
  }

  ParamVector to_unconstrained(const ParamVector& t) const override
  {
    return ParamVector{{t(0), std::log(t(1) - t(0)), math::logit(t(2))}};
  }

  ParamVector from_unconstrained(const ParamVector& e) const override
  {
    return ParamVector{{e(0), e(0) + std::exp(e(1)), math::sigmoid(e(2))}};
  }

  double log_abs_det_transform(const ParamVector& e) const override
  {
    return e(1) + math::log_sigmoid(e(2)) + math::log1m_sigmoid(e(2));
  }

  /// log f(y; theta) for a single observation.
  double log_density(double y, const ParamVector& t) const
  {
    const double z1 = (y - t(0)) / sigma_;
    const double z2 = (y - t(1)) / sigma_;
    return math::log_add_exp(std::log(t(2)) + math::normal_log_pdf(z1),
                             std::log1p(-t(2)) + math::normal_log_pdf(z2)) -
           std::log(sigma_);
  }

  double log_likelihood(const Dataset& d, const ParamVector& t) const override
  {
    check_dimension(t);
    if (!in_support(t))
      return neg_inf;
    const double lg = std::log(t(2));
    const double lg1 = std::log1p(-t(2));
    const double ls = std::log(sigma_) + math::log_sqrt_2pi;
    double acc = 0.0;
    for (Eigen::Index i = 0; i < d.y.size(); ++i) {
      const double z1 = (d.y(i) - t(0)) / sigma_;
      const double z2 = (d.y(i) - t(1)) / sigma_;
      const double a = lg - 0.5 * z1 * z1;
      const double b = lg1 - 0.5 * z2 * z2;
      const double m = std::max(a, b);
      acc += m + std::log1p(std::exp(-std::abs(a - b)));
    }
    return acc - static_cast<double>(d.y.size()) * ls;
  }

  /// grad_theta F(y; theta) / f(y; theta). Entries are non-finite when f
  /// underflows, which makes the Jacobian reject theta.
  Eigen::RowVector3d jacobian_row(double y, const ParamVector& t) const
  {
    const double z1 = (y - t(0)) / sigma_;
    const double z2 = (y - t(1)) / sigma_;
    const double la = std::log(t(2)) + math::normal_log_pdf(z1);
    const double lb = std::log1p(-t(2)) + math::normal_log_pdf(z2);
    const double lf = math::log_add_exp(la, lb); // log(sigma * f)
    if (lf == neg_inf)
      return Eigen::RowVector3d::Constant(std::numeric_limits<double>::quiet_NaN());
    // dF/dmu1 = -gamma phi(z1)/sigma, and f carries the same 1/sigma.
    const double r1 = -std::exp(la - lf);
    const double r2 = -std::exp(lb - lf);
    // dF/dgamma = Phi(z1) - Phi(z2); z2 < z1 because mu1 < mu2.
    const double r3 = sigma_ * math::normal_interval(z2, z1) / std::exp(lf);
    return {r1, r2, r3};
  }

  JacobianMatrix jacobian(const Dataset& d, const ParamVector& t) const override
  {
    check_dimension(t);
    JacobianMatrix a(d.y.size(), 3);
    for (Eigen::Index i = 0; i < d.y.size(); ++i)
      a.row(i) = jacobian_row(d.y(i), t);
    return a;
  }

  Dataset simulate(const ParamVector& t, std::size_t n, std::uint64_t seed) const override
  {
    check_dimension(t);
    if (!in_support(t))
      throw InvalidArgument("mixture: simulation parameters outside support");
    Rng rng(seed);
    Dataset d;
    d.y.resize(static_cast<Eigen::Index>(n));
    d.x.resize(static_cast<Eigen::Index>(n), 0);
    for (Eigen::Index i = 0; i < d.y.size(); ++i) {
      const double mu = rng.uniform() < t(2) ? t(0) : t(1);
      d.y(i) = mu + sigma_ * rng.normal();
    }
    return d;
  }

  ParamVector initial_guess(const Dataset& d) const override
  {
    std::vector<double> v(d.y.data(), d.y.data() + d.y.size());
    std::sort(v.begin(), v.end());
    const std::size_t half = v.size() / 2;
    double lo = 0.0, hi = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i)
      (i < half ? lo : hi) += v[i];
    lo /= static_cast<double>(std::max<std::size_t>(half, 1));
    hi /= static_cast<double>(std::max<std::size_t>(v.size() - half, 1));
    if (!(hi > lo))
      hi = lo + sigma_;
    return ParamVector{{lo, hi, 0.5}};
  }

  LogDensityFn fiducial_target(const Dataset& d, DNorm norm,
                               std::uint64_t cap = default_enumeration_cap) const override
  {
    if (norm != DNorm::D2)
      return Model::fiducial_target(d, norm, cap);
    // Shares the per-observation exponentials between likelihood and
    // Jacobian. The scratch matrix makes the returned target single-threaded.
    auto scratch = std::make_shared<JacobianMatrix>(d.y.size(), 3);
    return [this, &d, scratch](const ParamVector& t) {
      check_dimension(t);
      if (!t.allFinite() || !in_support(t))
        return neg_inf;
      if (d.y.size() < 3)
        throw InvalidArgument("underdetermined Jacobian: " + std::to_string(d.y.size()) +
                              " rows for 3 parameters");
      const double lg = std::log(t(2));
      const double lg1 = std::log1p(-t(2));
      double ll = 0.0;
      JacobianMatrix& a = *scratch;
      for (Eigen::Index i = 0; i < d.y.size(); ++i) {
        const double z1 = (d.y(i) - t(0)) / sigma_;
        const double z2 = (d.y(i) - t(1)) / sigma_;
        const double la = lg - 0.5 * z1 * z1;
        const double lb = lg1 - 0.5 * z2 * z2;
        const double lf = math::log_add_exp(la, lb);
        if (lf == neg_inf)
          return neg_inf;
        ll += lf;
        a(i, 0) = -std::exp(la - lf);
        a(i, 1) = -std::exp(lb - lf);
        a(i, 2) = sigma_ * math::normal_interval(z2, z1) * std::exp(math::log_sqrt_2pi - lf);
      }
      ll -= static_cast<double>(d.y.size()) * (std::log(sigma_) + math::log_sqrt_2pi);
      if (std::isnan(ll))
        throw ModelEvaluationError("mixture: model evaluation failure (NaN likelihood)");
      const double lj = log_d2(a);
      return lj == neg_inf ? neg_inf : ll + lj;
    };
  }

private:
  double sigma_;
};

} // namespace gfi
