#pragma once

#include <gfi/data.hpp>
#include <gfi/error.hpp>
#include <gfi/model.hpp>
#include <gfi/parallel.hpp>
#include <gfi/sampler.hpp>

#include <Eigen/Dense>

#include <cstddef>
#include <mutex>
#include <span>
#include <string>
#include <vector>

namespace gfi {

/// What crossed the coordinator/worker boundary.
enum class PayloadKind
{
  ChainResult,    ///< worker -> coordinator: T x p particles
  Particles,      ///< coordinator -> worker: T x p particles to evaluate
  LogLikelihoods, ///< worker -> coordinator: T log-likelihood values
};

struct PayloadRecord
{
  PayloadKind kind;
  std::size_t worker;
  Eigen::Index rows;
  Eigen::Index cols;
};

/// K in-process workers, each owning one data subset.
///
/// The coordinator talks to workers only through this interface: it can ask a
/// worker to sample its subset fiducial density or to evaluate its
/// log-likelihood on a particle matrix. Observations never leave a worker.
/// Every payload is logged so tests can audit the boundary.
class Cluster
{
public:
  Cluster(const Model& model, std::vector<DataSubset> subsets, std::size_t concurrency = 0)
    : model_(model), subsets_(std::move(subsets)), concurrency_(concurrency)
  {
    if (subsets_.empty())
      throw InvalidArgument("cluster needs at least one subset");
    for (const auto& s : subsets_)
      if (s.size() == 0)
        throw InvalidArgument("subset " + std::to_string(s.id) + " is empty");
  }

  Cluster(const Cluster&) = delete;
  Cluster& operator=(const Cluster&) = delete;

  std::size_t size() const { return subsets_.size(); }
  std::size_t concurrency() const { return concurrency_; }
  const Model& model() const { return model_; }
  std::size_t subset_size(std::size_t k) const { return subsets_.at(k).size(); }

  ChainOutput sample(std::size_t k, const ChainConfig& cfg, DNorm norm) const
  {
    ChainOutput out = run_chain(model_, subsets_.at(k), cfg, norm);
    out.subset_id = k;
    record({PayloadKind::ChainResult, k, out.particles.rows(), out.particles.cols()});
    return out;
  }

  /// One chain per worker, run concurrently up to the concurrency limit.
  std::vector<ChainOutput> sample_all(std::span<const ChainConfig> configs, DNorm norm) const
  {
    if (configs.size() != size())
      throw InvalidArgument("one chain configuration per worker is required");
    std::vector<ChainOutput> out(size());
    parallel_for(size(), concurrency_, [&](std::size_t k) { out[k] = sample(k, configs[k], norm); });
    return out;
  }

  /// log f(y_k; theta_t) for each particle row, evaluated on worker k.
  Eigen::VectorXd log_likelihoods(std::size_t k, const ParticleMatrix& particles) const
  {
    record({PayloadKind::Particles, k, particles.rows(), particles.cols()});
    Eigen::VectorXd out = model_.log_likelihoods(subsets_.at(k).data, particles);
    if (out.hasNaN())
      throw ModelEvaluationError(model_.name() + ": model evaluation failure on worker " +
                                 std::to_string(k));
    record({PayloadKind::LogLikelihoods, k, out.size(), 1});
    return out;
  }

  /// Sum of log_likelihoods over a group of workers, accumulated in the
  /// group's listed order.
  Eigen::VectorXd group_log_likelihoods(std::span<const std::size_t> group,
                                        const ParticleMatrix& particles) const
  {
    std::vector<Eigen::VectorXd> parts(group.size());
    parallel_for(group.size(), concurrency_,
                 [&](std::size_t i) { parts[i] = log_likelihoods(group[i], particles); });
    Eigen::VectorXd acc = Eigen::VectorXd::Zero(particles.rows());
    for (const auto& p : parts)
      acc += p;
    return acc;
  }

  std::vector<PayloadRecord> payload_log() const
  {
    std::lock_guard lock(mutex_);
    return log_;
  }

private:
  void record(PayloadRecord r) const
  {
    std::lock_guard lock(mutex_);
    log_.push_back(r);
  }

  const Model& model_;
  std::vector<DataSubset> subsets_;
  std::size_t concurrency_;
  mutable std::mutex mutex_;
  mutable std::vector<PayloadRecord> log_;
};

} // namespace gfi
