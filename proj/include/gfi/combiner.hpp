#pragma once

#include <gfi/cluster.hpp>
#include <gfi/data.hpp>
#include <gfi/error.hpp>
#include <gfi/math.hpp>
#include <gfi/model.hpp>
#include <gfi/rng.hpp>
#include <gfi/sampler.hpp>

#include <Eigen/Dense>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace gfi {

/// A subset A of the parameter space, as a predicate on theta.
using Assertion = std::function<bool(const ParamVector&)>;

/// Particles with log importance weights and the subsets whose data the
/// weights have absorbed.
struct WeightedSample
{
  ParticleMatrix particles;
  /// Un-normalized; all zero after resampling.
  Eigen::VectorXd log_weights;
  /// Sorted subset identifiers.
  std::vector<std::size_t> lineage;
  double ess = 0.0;

  std::size_t size() const { return static_cast<std::size_t>(particles.rows()); }
};

struct NormalizedWeights
{
  Eigen::VectorXd probabilities;
  double ess = 0.0;
};

/// p_t = exp(lw_t - max) / sum_s exp(lw_s - max) and ess = 1 / sum p_t^2.
inline NormalizedWeights normalize_and_ess(const Eigen::Ref<const Eigen::VectorXd>& log_weights)
{
  if (log_weights.size() == 0)
    throw InvalidArgument("normalize_and_ess: empty weight vector");
  if (log_weights.hasNaN() || (log_weights.array() == std::numeric_limits<double>::infinity()).any())
    throw ModelEvaluationError("normalize_and_ess: NaN or +inf log-weight");
  const double top = log_weights.maxCoeff();
  if (top == neg_inf)
    throw StatisticalFailure("total weight degeneracy: every log-weight is -inf");
  NormalizedWeights out;
  out.probabilities.resize(log_weights.size());
  // scalar exp: vectorized exp flushes -inf to a denormal rather than 0
  for (Eigen::Index t = 0; t < log_weights.size(); ++t)
    out.probabilities(t) = std::exp(log_weights(t) - top);
  out.probabilities /= out.probabilities.sum();
  out.ess = 1.0 / out.probabilities.squaredNorm();
  out.ess = std::clamp(out.ess, 1.0, static_cast<double>(log_weights.size()));
  return out;
}

/// Systematic resampling: one uniform offset u ~ U(0, 1/m), index t is taken
/// once for every point u + i/m that falls in its cumulative-probability cell.
inline std::vector<std::size_t> systematic_indices(const Eigen::Ref<const Eigen::VectorXd>& probabilities,
                                                   std::size_t m, std::uint64_t seed)
{
  if (m == 0)
    throw InvalidArgument("resample: m must be positive");
  if (probabilities.size() == 0)
    throw InvalidArgument("resample: no particles");
  if ((probabilities.array() < 0.0).any() || std::abs(probabilities.sum() - 1.0) > 1e-10)
    throw InvalidArgument("resample: probabilities must be non-negative and sum to 1");
  Rng rng(seed);
  const double step = 1.0 / static_cast<double>(m);
  const double offset = rng.uniform() * step;
  std::vector<std::size_t> out;
  out.reserve(m);
  const auto n = static_cast<std::size_t>(probabilities.size());
  std::size_t t = 0;
  double cumulative = probabilities(0);
  for (std::size_t i = 0; i < m; ++i) {
    const double point = offset + static_cast<double>(i) * step;
    while (point >= cumulative && t + 1 < n)
      cumulative += probabilities(static_cast<Eigen::Index>(++t));
    // Trailing zero-probability cells are never selected.
    while (probabilities(static_cast<Eigen::Index>(t)) == 0.0 && t > 0)
      --t;
    out.push_back(t);
  }
  return out;
}

inline ParticleMatrix resample(const ParticleMatrix& particles,
                               const Eigen::Ref<const Eigen::VectorXd>& probabilities, std::size_t m,
                               std::uint64_t seed)
{
  if (probabilities.size() != particles.rows())
    throw InvalidArgument("resample: one probability per particle is required");
  const auto idx = systematic_indices(probabilities, m, seed);
  ParticleMatrix out(static_cast<Eigen::Index>(m), particles.cols());
  for (std::size_t i = 0; i < m; ++i)
    out.row(static_cast<Eigen::Index>(i)) = particles.row(static_cast<Eigen::Index>(idx[i]));
  return out;
}

/// log w~_k(theta) = sum_{j != k} log f(y_j; theta). Needs likelihoods only.
inline double simplified_log_weight(const Model& model, std::span<const DataSubset> other_subsets,
                                    const ParamVector& theta)
{
  double acc = 0.0;
  for (const auto& s : other_subsets) {
    const double l = model.log_likelihood(s.data, theta);
    if (std::isnan(l))
      throw ModelEvaluationError(model.name() + ": model evaluation failure");
    acc += l;
  }
  return acc;
}

/// log w_k(theta) = log J(y, theta) - log J(y_k, theta) + sum_{j != k} log f(y_j; theta).
/// Needs the pooled data; oracle and test paths only.
inline double exact_log_weight(const Model& model, std::span<const DataSubset> all_subsets,
                               std::size_t k, const ParamVector& theta, DNorm norm = DNorm::D2,
                               std::uint64_t cap = default_enumeration_cap)
{
  if (k >= all_subsets.size())
    throw InvalidArgument("exact_log_weight: subset index out of range");
  if (!model.in_support(theta))
    return neg_inf;
  double others = 0.0;
  for (std::size_t j = 0; j < all_subsets.size(); ++j)
    if (j != k)
      others += model.log_likelihood(all_subsets[j].data, theta);
  if (all_subsets.size() == 1)
    return others;
  const DataSubset pooled = concatenate(all_subsets);
  const double full = log_jacobian(model, pooled.data, theta, norm, cap);
  const double own = log_jacobian(model, all_subsets[k].data, theta, norm, cap);
  if (full == neg_inf)
    return neg_inf;
  return full - own + others;
}

/// log-weights for the particles proposed from subset k.
using LogWeightFn = std::function<Eigen::VectorXd(std::size_t k, const ParticleMatrix&)>;

/// Production weighting: each other worker evaluates its likelihood on the
/// particles of subset k.
inline LogWeightFn simplified_weights(const Cluster& cluster)
{
  return [&cluster](std::size_t k, const ParticleMatrix& particles) {
    std::vector<std::size_t> others;
    for (std::size_t j = 0; j < cluster.size(); ++j)
      if (j != k)
        others.push_back(j);
    return cluster.group_log_likelihoods(others, particles);
  };
}

inline LogWeightFn exact_weights(const Model& model, std::span<const DataSubset> subsets,
                                 DNorm norm = DNorm::D2, std::uint64_t cap = default_enumeration_cap)
{
  return [&model, subsets, norm, cap](std::size_t k, const ParticleMatrix& particles) {
    Eigen::VectorXd out(particles.rows());
    for (Eigen::Index t = 0; t < particles.rows(); ++t)
      out(t) = exact_log_weight(model, subsets, k, particles.row(t).transpose(), norm, cap);
    return out;
  };
}

/// Direct combination: per-subset self-normalized importance estimates
/// averaged over the subsets that did not degenerate.
struct DirectResult
{
  std::vector<ParticleMatrix> particles;
  std::vector<Eigen::VectorXd> probabilities;
  std::vector<double> ess;
  /// Subsets whose weights degenerated and were dropped.
  std::vector<std::size_t> excluded;
  std::vector<std::string> warnings;

  std::size_t included() const { return particles.size(); }

  /// R~_k(A) for each included subset.
  std::vector<double> per_subset(const Assertion& a) const
  {
    std::vector<double> out;
    for (std::size_t k = 0; k < particles.size(); ++k) {
      double acc = 0.0;
      for (Eigen::Index t = 0; t < particles[k].rows(); ++t)
        if (a(particles[k].row(t).transpose()))
          acc += probabilities[k](t);
      out.push_back(acc);
    }
    return out;
  }

  /// R~(A) = mean_k R~_k(A).
  double estimate(const Assertion& a) const
  {
    const auto r = per_subset(a);
    double acc = 0.0;
    for (double v : r)
      acc += v;
    return acc / static_cast<double>(r.size());
  }

  double mean_ess() const
  {
    double acc = 0.0;
    for (double e : ess)
      acc += e;
    return acc / static_cast<double>(ess.size());
  }

  /// All particles, each weighted p_{k,t} / K_used, so weighted averages
  /// reproduce estimate().
  WeightedSample pooled() const
  {
    WeightedSample out;
    Eigen::Index rows = 0;
    for (const auto& p : particles)
      rows += p.rows();
    const auto cols = particles.front().cols();
    out.particles.resize(rows, cols);
    out.log_weights.resize(rows);
    Eigen::Index r = 0;
    const double share = std::log(static_cast<double>(particles.size()));
    for (std::size_t k = 0; k < particles.size(); ++k) {
      out.particles.middleRows(r, particles[k].rows()) = particles[k];
      out.log_weights.segment(r, particles[k].rows()) = probabilities[k].array().log() - share;
      r += particles[k].rows();
    }
    out.ess = normalize_and_ess(out.log_weights).ess;
    return out;
  }
};

/// Direct combination: per-subset importance weighting. Subsets whose weights are all zero are
/// excluded with a warning; StatisticalFailure if none survive.
inline DirectResult run_direct(std::span<const ChainOutput> chains, const LogWeightFn& log_weights)
{
  if (chains.empty())
    throw InvalidArgument("direct: no chains");
  DirectResult out;
  for (std::size_t k = 0; k < chains.size(); ++k) {
    const Eigen::VectorXd lw = log_weights(k, chains[k].particles);
    try {
      auto nw = normalize_and_ess(lw);
      out.particles.push_back(chains[k].particles);
      out.probabilities.push_back(std::move(nw.probabilities));
      out.ess.push_back(nw.ess);
    } catch (const StatisticalFailure&) {
      out.excluded.push_back(k);
      out.warnings.push_back("subset " + std::to_string(k) +
                             ": total weight degeneracy, excluded from the average");
    }
  }
  if (out.particles.empty())
    throw StatisticalFailure("direct: weights degenerated on every subset");
  return out;
}

/// Pairings of live sample identifiers for each merge round.
struct MergePlan
{
  std::vector<std::vector<std::pair<std::size_t, std::size_t>>> rounds;

  /// Pairs live identifiers in ascending order; an odd survivor passes
  /// through; each merged sample keeps the lower identifier.
  static MergePlan tree(std::size_t k)
  {
    if (k == 0)
      throw InvalidArgument("merge plan: K must be positive");
    MergePlan plan;
    std::vector<std::size_t> live(k);
    for (std::size_t i = 0; i < k; ++i)
      live[i] = i;
    while (live.size() > 1) {
      std::vector<std::pair<std::size_t, std::size_t>> round;
      std::vector<std::size_t> next;
      for (std::size_t i = 0; i + 1 < live.size(); i += 2) {
        round.emplace_back(live[i], live[i + 1]);
        next.push_back(live[i]);
      }
      if (live.size() % 2 == 1)
        next.push_back(live.back());
      plan.rounds.push_back(std::move(round));
      live = std::move(next);
    }
    return plan;
  }

  /// Checks that the plan reduces identifiers 0..k-1 to exactly one.
  void validate(std::size_t k) const
  {
    std::vector<bool> live(k, true);
    std::size_t count = k;
    for (std::size_t r = 0; r < rounds.size(); ++r) {
      std::vector<bool> used(k, false);
      for (auto [a, b] : rounds[r]) {
        if (a >= k || b >= k || a == b || !live[a] || !live[b] || used[a] || used[b])
          throw InvalidArgument("merge plan: invalid pairing in round " + std::to_string(r + 1));
        used[a] = used[b] = true;
        live[std::max(a, b)] = false;
        --count;
      }
    }
    if (count != 1)
      throw InvalidArgument("merge plan leaves " + std::to_string(count) + " samples, expected 1");
  }
};

struct MergeRecord
{
  std::size_t round = 0;
  std::size_t left = 0;
  std::size_t right = 0;
  double ess_left = 0.0;
  double ess_right = 0.0;
  double log_sum_left = 0.0;
  double log_sum_right = 0.0;
};

/// One JSON object per line.
inline void write_merge_trace(std::ostream& os, std::span<const MergeRecord> trace)
{
  for (const auto& r : trace)
    os << "{\"round\":" << r.round << ",\"left\":" << r.left << ",\"right\":" << r.right
       << ",\"ess_left\":" << detail::format_double(r.ess_left)
       << ",\"ess_right\":" << detail::format_double(r.ess_right)
       << ",\"log_sum_left\":" << detail::format_double(r.log_sum_left)
       << ",\"log_sum_right\":" << detail::format_double(r.log_sum_right) << "}\n";
}

struct MethodGResult
{
  WeightedSample sample;
  std::vector<MergeRecord> trace;
  /// Wall-clock spent in cross-evaluation of likelihoods.
  double weighting_seconds = 0.0;

  /// Smallest per-side ESS over all merges; nullopt when K = 1.
  std::optional<double> min_merge_ess() const
  {
    std::optional<double> m;
    for (const auto& r : trace) {
      const double v = std::min(r.ess_left, r.ess_right);
      m = m ? std::min(*m, v) : v;
    }
    return m;
  }
};

/// Method G: pairwise resample-and-merge until one sample whose
/// lineage covers every subset remains.
///
/// For a pair (i, j) the particles of i are weighted by the likelihood of j's
/// data group and vice versa; ceil(T/2) draws come from i and floor(T/2) from
/// j, so the merged sample keeps T particles. Only particle matrices and
/// log-likelihood vectors travel between coordinator and workers.
inline MethodGResult run_method_g(std::span<const ChainOutput> chains, const Cluster& cluster,
                                  const MergePlan& plan, std::uint64_t seed)
{
  const std::size_t k = chains.size();
  if (k == 0)
    throw InvalidArgument("method G: no chains");
  if (k != cluster.size())
    throw InvalidArgument("method G: one chain per worker is required");
  plan.validate(k);

  std::vector<std::optional<WeightedSample>> live(k);
  for (std::size_t i = 0; i < k; ++i) {
    WeightedSample s;
    s.particles = chains[i].particles;
    s.log_weights = Eigen::VectorXd::Zero(s.particles.rows());
    s.lineage = {i};
    s.ess = static_cast<double>(s.particles.rows());
    if (s.particles.rows() != chains[0].particles.rows())
      throw InvalidArgument("method G: chains must have equal length");
    live[i] = std::move(s);
  }

  MethodGResult out;
  for (std::size_t r = 0; r < plan.rounds.size(); ++r) {
    const auto& pairs = plan.rounds[r];
    // side 2p weights the left sample by the right group, side 2p+1 the reverse
    std::vector<Eigen::VectorXd> cross(2 * pairs.size());
    const auto started = std::chrono::steady_clock::now();
    parallel_for(cross.size(), cluster.concurrency(), [&](std::size_t s) {
      const auto [a, b] = pairs[s / 2];
      const WeightedSample& mine = *live[s % 2 == 0 ? a : b];
      const WeightedSample& other = *live[s % 2 == 0 ? b : a];
      cross[s] = cluster.group_log_likelihoods(other.lineage, mine.particles);
    });
    out.weighting_seconds +=
        std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();

    for (std::size_t p = 0; p < pairs.size(); ++p) {
      const auto [a, b] = pairs[p];
      WeightedSample& left = *live[a];
      WeightedSample& right = *live[b];
      MergeRecord rec{r + 1, a, b};
      auto normalize = [&](const Eigen::VectorXd& lw, const char* side) {
        try {
          return normalize_and_ess(lw);
        } catch (const StatisticalFailure&) {
          throw StatisticalFailure("method G: total weight degeneracy in round " +
                                   std::to_string(r + 1) + " merging samples " +
                                   std::to_string(a) + " and " + std::to_string(b) + " (" +
                                   side + " side, ESS 0)");
        }
      };
      const auto wl = normalize(cross[2 * p], "left");
      const auto wr = normalize(cross[2 * p + 1], "right");
      rec.ess_left = wl.ess;
      rec.ess_right = wr.ess;
      rec.log_sum_left = math::log_sum_exp(cross[2 * p]);
      rec.log_sum_right = math::log_sum_exp(cross[2 * p + 1]);

      const std::size_t t = left.size();
      const std::size_t m_left = (t + 1) / 2;
      const std::size_t m_right = t / 2;
      WeightedSample merged;
      merged.particles.resize(static_cast<Eigen::Index>(t), left.particles.cols());
      merged.particles.topRows(static_cast<Eigen::Index>(m_left)) =
          resample(left.particles, wl.probabilities, m_left, derive_seed(seed, "merge", r + 1, 2 * a));
      if (m_right > 0)
        merged.particles.bottomRows(static_cast<Eigen::Index>(m_right)) = resample(
            right.particles, wr.probabilities, m_right, derive_seed(seed, "merge", r + 1, 2 * a + 1));
      merged.log_weights = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(t));
      merged.lineage = left.lineage;
      merged.lineage.insert(merged.lineage.end(), right.lineage.begin(), right.lineage.end());
      std::sort(merged.lineage.begin(), merged.lineage.end());
      merged.ess = static_cast<double>(t);
      live[std::min(a, b)] = std::move(merged);
      live[std::max(a, b)].reset();
      out.trace.push_back(rec);
    }
  }

  for (auto& s : live)
    if (s) {
      out.sample = std::move(*s);
      break;
    }
  return out;
}

/// Fiducial probability of A: weighted fraction of particles in A (plain
/// fraction for uniform weights).
inline double estimate_R(const WeightedSample& sample, const Assertion& assertion)
{
  if (sample.size() == 0)
    throw InvalidArgument("estimate_R: empty sample");
  const bool uniform = (sample.log_weights.array() == sample.log_weights(0)).all();
  if (uniform) {
    std::size_t hits = 0;
    for (Eigen::Index t = 0; t < sample.particles.rows(); ++t)
      hits += assertion(sample.particles.row(t).transpose()) ? 1 : 0;
    return static_cast<double>(hits) / static_cast<double>(sample.size());
  }
  const auto w = normalize_and_ess(sample.log_weights);
  double acc = 0.0;
  for (Eigen::Index t = 0; t < sample.particles.rows(); ++t)
    if (assertion(sample.particles.row(t).transpose()))
      acc += w.probabilities(t);
  return acc;
}

} // namespace gfi
