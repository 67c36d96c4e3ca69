#pragma once

#include <gfi/data.hpp>
#include <gfi/error.hpp>
#include <gfi/model.hpp>
#include <gfi/rng.hpp>

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <ostream>
#include <span>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

namespace gfi {

/// Effective sample size T / (1 + 2 sum rho_l) with Geyer's initial positive
/// sequence truncation, clamped to (0, T]. A constant series returns 1.
inline double effective_sample_size(std::span<const double> series)
{
  const std::size_t n = series.size();
  if (n < 10)
    throw InvalidArgument("effective_sample_size: need at least 10 values, got " +
                          std::to_string(n));
  const double mean = std::accumulate(series.begin(), series.end(), 0.0) / static_cast<double>(n);
  auto autocov = [&](std::size_t lag) {
    double acc = 0.0;
    for (std::size_t i = 0; i + lag < n; ++i)
      acc += (series[i] - mean) * (series[i + lag] - mean);
    return acc / static_cast<double>(n);
  };
  const double c0 = autocov(0);
  if (!(c0 > 0.0))
    return 1.0;
  // tau = -1 + 2 sum_m Gamma_m with Gamma_m = rho_{2m} + rho_{2m+1}
  double tau = -1.0;
  for (std::size_t m = 0; 2 * m + 1 < n; ++m) {
    const double gamma = (autocov(2 * m) + autocov(2 * m + 1)) / c0;
    if (!(gamma > 0.0))
      break;
    tau += 2.0 * gamma;
  }
  const double t = static_cast<double>(n);
  if (!(tau > 0.0))
    return t;
  return std::clamp(t / tau, std::numeric_limits<double>::min(), t);
}

inline double effective_sample_size(const Eigen::Ref<const Eigen::VectorXd>& series)
{
  return effective_sample_size(std::span<const double>(series.data(), static_cast<std::size_t>(series.size())));
}

struct ChainConfig
{
  /// Post-burn-in particles returned.
  std::size_t samples = 10000;
  /// Defaults to samples / 2.
  std::optional<std::size_t> burn_in;
  std::size_t thin = 1;
  /// Constrained starting point; the subset MLE when empty.
  std::optional<ParamVector> init;
  std::uint64_t seed = 0;
  double target_accept = 0.234;
  std::uint64_t enumeration_cap = default_enumeration_cap;

  std::size_t burn_in_steps() const { return burn_in.value_or(samples / 2); }

  void validate() const
  {
    if (samples < 100)
      throw InvalidArgument("chain: T must be at least 100");
    if (thin < 1)
      throw InvalidArgument("chain: thin must be at least 1");
    if (!(target_accept > 0.0 && target_accept < 1.0))
      throw InvalidArgument("chain: target acceptance must lie in (0, 1)");
  }
};

struct ChainOutput
{
  std::size_t subset_id = 0;
  /// T x p, constrained space.
  ParticleMatrix particles;
  /// Unnormalized log fiducial density (constrained space) of each particle.
  Eigen::VectorXd log_density;
  double accept_rate = 0.0;
  double burn_in_accept_rate = 0.0;
  Eigen::VectorXd ess_per_coord;
  /// Proposal covariance (sampling space) used after burn-in.
  Eigen::MatrixXd proposal_covariance;
  /// Index of the last step that modified the proposal; always < burn-in
  /// when burn-in is positive.
  std::optional<std::size_t> last_adaptation_step;
};

namespace detail {

/// Derivative-free maximization (Nelder-Mead) of f starting at x0.
inline Eigen::VectorXd nelder_mead_maximize(const std::function<double(const Eigen::VectorXd&)>& f,
                                            const Eigen::VectorXd& x0, double initial_step = 0.1,
                                            int max_evals = 4000, double tol = 1e-9)
{
  const auto p = x0.size();
  std::vector<Eigen::VectorXd> simplex;
  std::vector<double> value;
  auto eval = [&](const Eigen::VectorXd& x) {
    const double v = f(x);
    return std::isfinite(v) ? -v : std::numeric_limits<double>::infinity();
  };
  simplex.push_back(x0);
  value.push_back(eval(x0));
  for (Eigen::Index i = 0; i < p; ++i) {
    Eigen::VectorXd x = x0;
    x(i) += initial_step * std::max(1.0, std::abs(x0(i)));
    simplex.push_back(x);
    value.push_back(eval(x));
  }
  int evals = static_cast<int>(p) + 1;
  std::vector<std::size_t> order(static_cast<std::size_t>(p) + 1);
  while (evals < max_evals) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](auto a, auto b) { return value[a] < value[b]; });
    const auto best = order.front();
    const auto worst = order.back();
    const auto second = order[order.size() - 2];
    if (std::isfinite(value[worst]) &&
        std::abs(value[worst] - value[best]) <= tol * (std::abs(value[best]) + 1e-12))
      break;
    Eigen::VectorXd centroid = Eigen::VectorXd::Zero(p);
    for (auto i : order)
      if (i != worst)
        centroid += simplex[i];
    centroid /= static_cast<double>(p);

    const Eigen::VectorXd reflected = centroid + (centroid - simplex[worst]);
    const double fr = eval(reflected);
    ++evals;
    if (fr < value[best]) {
      const Eigen::VectorXd expanded = centroid + 2.0 * (centroid - simplex[worst]);
      const double fe = eval(expanded);
      ++evals;
      if (fe < fr) {
        simplex[worst] = expanded;
        value[worst] = fe;
      } else {
        simplex[worst] = reflected;
        value[worst] = fr;
      }
    } else if (fr < value[second]) {
      simplex[worst] = reflected;
      value[worst] = fr;
    } else {
      const bool outside = fr < value[worst];
      const Eigen::VectorXd contracted =
          outside ? Eigen::VectorXd(centroid + 0.5 * (reflected - centroid))
                  : Eigen::VectorXd(centroid + 0.5 * (simplex[worst] - centroid));
      const double fc = eval(contracted);
      ++evals;
      if (fc < std::min(fr, value[worst])) {
        simplex[worst] = contracted;
        value[worst] = fc;
      } else {
        for (auto i : order) {
          if (i == best)
            continue;
          simplex[i] = simplex[best] + 0.5 * (simplex[i] - simplex[best]);
          value[i] = eval(simplex[i]);
          ++evals;
        }
      }
    }
  }
  const auto it = std::min_element(value.begin(), value.end());
  return simplex[static_cast<std::size_t>(it - value.begin())];
}

/// Negative inverse Hessian of f at x by central differences, or nullopt when
/// the Hessian is not negative definite.
inline std::optional<Eigen::MatrixXd> local_covariance(
    const std::function<double(const Eigen::VectorXd&)>& f, const Eigen::VectorXd& x)
{
  const auto p = x.size();
  Eigen::MatrixXd h(p, p);
  const double f0 = f(x);
  if (!std::isfinite(f0))
    return std::nullopt;
  Eigen::VectorXd step(p);
  for (Eigen::Index i = 0; i < p; ++i)
    step(i) = 1e-4 * std::max(1.0, std::abs(x(i)));
  for (Eigen::Index i = 0; i < p; ++i) {
    for (Eigen::Index j = i; j < p; ++j) {
      Eigen::VectorXd a = x, b = x, c = x, d = x;
      a(i) += step(i); a(j) += step(j);
      b(i) += step(i); b(j) -= step(j);
      c(i) -= step(i); c(j) += step(j);
      d(i) -= step(i); d(j) -= step(j);
      const double v = (f(a) - f(b) - f(c) + f(d)) / (4.0 * step(i) * step(j));
      h(i, j) = h(j, i) = v;
    }
  }
  if (!h.allFinite())
    return std::nullopt;
  Eigen::LLT<Eigen::MatrixXd> llt(-h);
  if (llt.info() != Eigen::Success)
    return std::nullopt;
  Eigen::MatrixXd cov = llt.solve(Eigen::MatrixXd::Identity(p, p));
  if (!cov.allFinite())
    return std::nullopt;
  return cov;
}

} // namespace detail

/// Subset maximum-likelihood estimate by Nelder-Mead in the sampling space,
/// started from the model's moment-based guess.
inline ParamVector subset_mle(const Model& model, const Dataset& data)
{
  ParamVector start = model.initial_guess(data);
  if (!model.in_support(start))
    throw InvalidArgument(model.name() + ": initial guess outside support");
  auto loglik = [&](const Eigen::VectorXd& eta) {
    const ParamVector theta = model.from_unconstrained(eta);
    if (!theta.allFinite() || !model.in_support(theta))
      return neg_inf;
    return model.log_likelihood(data, theta);
  };
  Eigen::VectorXd eta = model.to_unconstrained(start);
  // Two restarts shake the simplex out of early collapse.
  for (int round = 0; round < 3; ++round)
    eta = detail::nelder_mead_maximize(loglik, eta, round == 0 ? 0.1 : 0.02);
  return model.from_unconstrained(eta);
}

/// Adaptive random-walk Metropolis-Hastings on the subset fiducial density.
///
/// The chain runs in the model's unconstrained space, where the target is
/// log r_k(theta(eta)) + log |d theta / d eta|. The proposal is N(0, s * C);
/// C starts from the local curvature at the initial point and during burn-in
/// is replaced by (2.38^2 / p) * running covariance + 1e-6 I, while log s
/// follows a Robbins-Monro recursion toward `target_accept`. After burn-in the
/// kernel is fixed.
inline ChainOutput run_chain(const Model& model, const DataSubset& subset, const ChainConfig& cfg,
                             DNorm norm = DNorm::D2)
{
  cfg.validate();
  if (subset.size() == 0)
    throw InvalidArgument("chain: subset " + std::to_string(subset.id) + " is empty");
  if (subset.size() < model.dim())
    throw InvalidArgument("underdetermined Jacobian: subset " + std::to_string(subset.id) +
                          " has " + std::to_string(subset.size()) + " observations for " +
                          std::to_string(model.dim()) + " parameters");

  const Dataset& data = subset.data;
  const LogDensityFn density = model.fiducial_target(data, norm, cfg.enumeration_cap);
  auto target = [&](const Eigen::VectorXd& eta) {
    const ParamVector theta = model.from_unconstrained(eta);
    if (!theta.allFinite() || !model.in_support(theta))
      return neg_inf;
    const double lr = density(theta);
    return lr == neg_inf ? neg_inf : lr + model.log_abs_det_transform(eta);
  };

  ParamVector theta0;
  if (cfg.init) {
    model.check_dimension(*cfg.init);
    if (!model.in_support(*cfg.init))
      throw InvalidArgument("chain: initial value outside the model support");
    theta0 = *cfg.init;
  } else {
    theta0 = subset_mle(model, data);
  }

  const auto p = static_cast<Eigen::Index>(model.dim());
  Eigen::VectorXd eta = model.to_unconstrained(theta0);
  double current = target(eta);
  if (current == neg_inf)
    throw InvalidArgument("chain: fiducial density is zero at the initial value");

  const double base_scale = 2.38 * 2.38 / static_cast<double>(p);
  Eigen::MatrixXd shape = detail::local_covariance(target, eta)
                              .value_or(Eigen::MatrixXd::Identity(p, p) * 0.01);
  Eigen::MatrixXd cov = base_scale * shape;
  Eigen::MatrixXd chol = Eigen::LLT<Eigen::MatrixXd>(cov).matrixL();
  double log_scale = 0.0;

  const std::size_t burn = cfg.burn_in_steps();
  const std::size_t total = burn + cfg.samples * cfg.thin;
  const std::size_t adapt_from = burn / 5;

  ChainOutput out;
  out.subset_id = subset.id;
  out.particles.resize(static_cast<Eigen::Index>(cfg.samples), p);
  out.log_density.resize(static_cast<Eigen::Index>(cfg.samples));

  Rng rng(cfg.seed);
  Eigen::VectorXd z(p);
  Eigen::VectorXd run_mean = Eigen::VectorXd::Zero(p);
  Eigen::MatrixXd run_m2 = Eigen::MatrixXd::Zero(p, p);
  std::size_t run_count = 0;
  std::size_t accepted_burn = 0, accepted_main = 0, kept = 0;

  for (std::size_t step = 0; step < total; ++step) {
    for (Eigen::Index i = 0; i < p; ++i)
      z(i) = rng.normal();
    const Eigen::VectorXd proposal = eta + std::exp(0.5 * log_scale) * (chol * z);
    const double candidate = target(proposal);
    const double log_u = std::log(rng.uniform());
    const double log_ratio = candidate - current;
    const bool accept = candidate != neg_inf && log_u < log_ratio;
    if (accept) {
      eta = proposal;
      current = candidate;
    }

    if (step < burn) {
      accepted_burn += accept ? 1 : 0;
      const double alpha = candidate == neg_inf ? 0.0 : std::min(1.0, std::exp(log_ratio));
      log_scale += (alpha - cfg.target_accept) / std::pow(static_cast<double>(step) + 10.0, 0.6);
      log_scale = std::clamp(log_scale, -12.0, 6.0);
      out.last_adaptation_step = step;
      if (step >= adapt_from) {
        ++run_count;
        const Eigen::VectorXd delta = eta - run_mean;
        run_mean += delta / static_cast<double>(run_count);
        run_m2 += delta * (eta - run_mean).transpose();
        const std::size_t min_count = std::max<std::size_t>(50, 10 * static_cast<std::size_t>(p));
        if (run_count >= min_count && run_count % 25 == 0) {
          Eigen::MatrixXd emp = run_m2 / static_cast<double>(run_count - 1);
          emp = base_scale * emp + 1e-6 * Eigen::MatrixXd::Identity(p, p);
          Eigen::LLT<Eigen::MatrixXd> llt(emp);
          if (llt.info() == Eigen::Success) {
            cov = emp;
            chol = llt.matrixL();
          }
        }
      }
      if (step + 1 == burn && accepted_burn == 0)
        throw StatisticalFailure("chain failed to mix: no proposal accepted during burn-in (subset " +
                                 std::to_string(subset.id) + ")");
      continue;
    }

    accepted_main += accept ? 1 : 0;
    if ((step - burn + 1) % cfg.thin == 0) {
      const auto row = static_cast<Eigen::Index>(kept++);
      const ParamVector theta = model.from_unconstrained(eta);
      out.particles.row(row) = theta.transpose();
      out.log_density(row) = current - model.log_abs_det_transform(eta);
    }
  }

  out.burn_in_accept_rate =
      burn > 0 ? static_cast<double>(accepted_burn) / static_cast<double>(burn) : 0.0;
  out.accept_rate = static_cast<double>(accepted_main) / static_cast<double>(total - burn);
  out.proposal_covariance = std::exp(log_scale) * cov;
  out.ess_per_coord.resize(p);
  for (Eigen::Index j = 0; j < p; ++j)
    out.ess_per_coord(j) = effective_sample_size(Eigen::VectorXd(out.particles.col(j)));
  return out;
}

/// Chain dump: `t,theta_1..theta_p,log_density`.
inline void write_chain_csv(std::ostream& os, const ChainOutput& chain,
                            const std::vector<std::string>& names)
{
  os << "t";
  for (const auto& n : names)
    os << "," << n;
  os << ",log_density\n";
  for (Eigen::Index t = 0; t < chain.particles.rows(); ++t) {
    os << t;
    for (Eigen::Index j = 0; j < chain.particles.cols(); ++j)
      os << "," << detail::format_double(chain.particles(t, j));
    os << "," << detail::format_double(chain.log_density(t)) << "\n";
  }
}

} // namespace gfi
