#pragma once

#include <gfi/model.hpp>
#include <gfi/rng.hpp>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

namespace gfi {

/// Linear regression with standard Cauchy errors, Y = b0 + x^T b + sigma W.
/// theta = (b0, b1..bq, sigma); sampling space replaces sigma by log sigma.
/// Simulated designs are equicorrelated standard normal with correlation rho.
class CauchyRegression final : public Model
{
public:
  explicit CauchyRegression(std::size_t covariates, double rho = 0.1)
    : q_(covariates), rho_(rho)
  {
    if (!(rho >= 0.0 && rho < 1.0))
      throw InvalidArgument("cauchy: design correlation must lie in [0, 1)");
  }

  std::string name() const override { return "cauchy"; }
  std::size_t dim() const override { return q_ + 2; }
  std::size_t covariates() const override { return q_; }
  double rho() const { return rho_; }

  std::vector<std::string> parameter_names() const override
  {
    std::vector<std::string> out{"beta0"};
    for (std::size_t j = 1; j <= q_; ++j)
      out.push_back("beta" + std::to_string(j));
    out.emplace_back("sigma");
    return out;
  }

  bool in_support(const ParamVector& t) const override
  {
    return static_cast<std::size_t>(t.size()) == dim() && t.allFinite() && t(t.size() - 1) > 0.0;
  }

  ParamVector to_unconstrained(const ParamVector& t) const override
  {
    ParamVector e = t;
    e(e.size() - 1) = std::log(t(t.size() - 1));
    return e;
  }

  ParamVector from_unconstrained(const ParamVector& e) const override
  {
    ParamVector t = e;
    t(t.size() - 1) = std::exp(e(e.size() - 1));
    return t;
  }

  double log_abs_det_transform(const ParamVector& e) const override { return e(e.size() - 1); }

  double log_likelihood(const Dataset& d, const ParamVector& t) const override
  {
    check_dimension(t);
    check_data(d);
    if (!in_support(t))
      return neg_inf;
    const double sigma = t(t.size() - 1);
    const Eigen::VectorXd w = residuals(d, t) / sigma;
    const double n = static_cast<double>(d.y.size());
    return -n * (std::log(std::numbers::pi) + std::log(sigma)) -
           w.array().square().log1p().sum();
  }

  /// Row (1, x_1..x_q, w) with w = (y - b0 - x^T b) / sigma.
  static Eigen::RowVectorXd jacobian_row(double y, const Eigen::Ref<const Eigen::RowVectorXd>& x,
                                         const ParamVector& t)
  {
    const auto q = x.size();
    Eigen::RowVectorXd row(q + 2);
    row(0) = 1.0;
    row.segment(1, q) = x;
    row(q + 1) = (y - t(0) - x.dot(t.segment(1, q).transpose())) / t(q + 1);
    return row;
  }

  JacobianMatrix jacobian(const Dataset& d, const ParamVector& t) const override
  {
    check_dimension(t);
    check_data(d);
    const auto n = d.y.size();
    const auto q = static_cast<Eigen::Index>(q_);
    JacobianMatrix a(n, q + 2);
    a.col(0).setOnes();
    if (q > 0)
      a.middleCols(1, q) = d.x;
    a.col(q + 1) = residuals(d, t) / t(q + 1);
    return a;
  }

  Dataset simulate(const ParamVector& t, std::size_t n, std::uint64_t seed) const override
  {
    check_dimension(t);
    if (!in_support(t))
      throw InvalidArgument("cauchy: simulation parameters outside support");
    Rng rng(seed);
    const auto q = static_cast<Eigen::Index>(q_);
    Dataset d;
    d.y.resize(static_cast<Eigen::Index>(n));
    d.x.resize(static_cast<Eigen::Index>(n), q);
    const double shared = std::sqrt(rho_);
    const double own = std::sqrt(1.0 - rho_);
    for (Eigen::Index i = 0; i < d.y.size(); ++i) {
      const double z0 = rng.normal();
      for (Eigen::Index j = 0; j < q; ++j)
        d.x(i, j) = shared * z0 + own * rng.normal();
      double mean = t(0);
      for (Eigen::Index j = 0; j < q; ++j)
        mean += d.x(i, j) * t(1 + j);
      d.y(i) = mean + t(q + 1) * rng.cauchy();
    }
    return d;
  }

  /// Least-squares start refined by iteratively reweighted least squares for
  /// the Cauchy M-estimator (weights 1 / (1 + w^2)); scale from the median
  /// absolute residual, which equals sigma for Cauchy errors.
  ParamVector initial_guess(const Dataset& d) const override
  {
    check_data(d);
    const auto n = d.y.size();
    const auto q = static_cast<Eigen::Index>(q_);
    Eigen::MatrixXd z(n, q + 1);
    z.col(0).setOnes();
    if (q > 0)
      z.rightCols(q) = d.x;
    Eigen::VectorXd beta = z.colPivHouseholderQr().solve(d.y);
    double sigma = 1.0;
    for (int iter = 0; iter < 30; ++iter) {
      const Eigen::VectorXd r = d.y - z * beta;
      sigma = std::max(median_abs(r), 1e-8);
      const Eigen::VectorXd w = ((r / sigma).array().square() + 1.0).inverse().sqrt();
      const Eigen::MatrixXd zw = w.asDiagonal() * z;
      beta = zw.colPivHouseholderQr().solve(w.cwiseProduct(d.y));
    }
    sigma = std::max(median_abs(d.y - z * beta), 1e-8);
    ParamVector t(q + 2);
    t.head(q + 1) = beta;
    t(q + 1) = sigma;
    return t;
  }

  /// D2 of [Z | w] with Z = [1 X] factors as D2(Z) * ||(I - P_Z) w||, so the QR
  /// of the fixed design block is computed once per subset.
  LogDensityFn fiducial_target(const Dataset& d, DNorm norm,
                               std::uint64_t cap = default_enumeration_cap) const override
  {
    if (norm != DNorm::D2)
      return Model::fiducial_target(d, norm, cap);
    check_data(d);
    const auto n = d.y.size();
    const auto q = static_cast<Eigen::Index>(q_);
    if (n < q + 2)
      throw InvalidArgument("underdetermined Jacobian: " + std::to_string(n) + " rows for " +
                            std::to_string(q + 2) + " parameters");
    Eigen::MatrixXd z(n, q + 1);
    z.col(0).setOnes();
    if (q > 0)
      z.rightCols(q) = d.x;
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(z);
    auto basis = std::make_shared<Eigen::MatrixXd>(qr.householderQ() * Eigen::MatrixXd::Identity(n, q + 1));
    const auto diag = qr.matrixQR().diagonal().cwiseAbs();
    double log_dz = 0.0;
    bool deficient = false;
    for (Eigen::Index i = 0; i < diag.size(); ++i) {
      if (diag(i) < rank_tolerance * diag.maxCoeff())
        deficient = true;
      log_dz += std::log(diag(i));
    }
    auto design = std::make_shared<Eigen::MatrixXd>(std::move(z));
    return [this, &d, basis, design, log_dz, deficient](const ParamVector& t) {
      check_dimension(t);
      if (!t.allFinite() || !in_support(t))
        return neg_inf;
      const auto q1 = design->cols();
      const double sigma = t(q1);
      const Eigen::VectorXd w = (d.y - *design * t.head(q1)) / sigma;
      const double ll = -static_cast<double>(w.size()) *
                            (std::log(std::numbers::pi) + std::log(sigma)) -
                        w.array().square().log1p().sum();
      if (std::isnan(ll))
        throw ModelEvaluationError("cauchy: model evaluation failure (NaN likelihood)");
      if (deficient)
        return neg_inf;
      const Eigen::VectorXd resid = w - *basis * (basis->transpose() * w);
      const double rn = resid.norm();
      if (!(rn > rank_tolerance * w.norm()))
        return neg_inf;
      return ll + log_dz + std::log(rn);
    };
  }

private:
  void check_data(const Dataset& d) const
  {
    if (static_cast<std::size_t>(d.x.cols()) != q_ || (q_ > 0 && d.x.rows() != d.y.size()))
      throw InvalidArgument("cauchy: data has " + std::to_string(d.x.cols()) +
                            " covariate columns, expected " + std::to_string(q_));
  }

  Eigen::VectorXd residuals(const Dataset& d, const ParamVector& t) const
  {
    const auto q = static_cast<Eigen::Index>(q_);
    Eigen::VectorXd r = d.y.array() - t(0);
    if (q > 0)
      r -= d.x * t.segment(1, q);
    return r;
  }

  static double median_abs(const Eigen::VectorXd& r)
  {
    std::vector<double> v(static_cast<std::size_t>(r.size()));
    for (Eigen::Index i = 0; i < r.size(); ++i)
      v[static_cast<std::size_t>(i)] = std::abs(r(i));
    if (v.empty())
      return 1.0;
    auto mid = v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2);
    std::nth_element(v.begin(), mid, v.end());
    return *mid;
  }

  std::size_t q_;
  double rho_;
};

} // namespace gfi
