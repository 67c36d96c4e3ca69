#pragma once

#include <gfi/cluster.hpp>
#include <gfi/combiner.hpp>
#include <gfi/data.hpp>
#include <gfi/error.hpp>
#include <gfi/inference.hpp>
#include <gfi/model.hpp>
#include <gfi/models/cauchy_regression.hpp>
#include <gfi/models/gpd_tail.hpp>
#include <gfi/models/normal_location.hpp>
#include <gfi/models/normal_mixture.hpp>
#include <gfi/rng.hpp>
#include <gfi/sampler.hpp>

#include <json.hpp>

#include <Eigen/Dense>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <memory>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

namespace gfi {

// ---------------------------------------------------------------------------
// model registry

/// Builds a model by name. Options (JSON object):
///   mixture: sigma (1)
///   cauchy:  covariates (5), rho (0.1)
///   normal:  sigma (1)
///   gpd:     threshold, or threshold_quantile (0.99) of `data`; tail_prob (0.999)
inline std::unique_ptr<Model> make_model(const std::string& name,
                                         const nlohmann::json& options = nlohmann::json::object(),
                                         const Dataset* data = nullptr)
{
  const auto opt = [&](const char* key, auto fallback) {
    return options.is_object() && options.contains(key) ? options.at(key).get<decltype(fallback)>()
                                                        : fallback;
  };
  try {
    if (name == "mixture")
      return std::make_unique<NormalMixture>(opt("sigma", 1.0));
    if (name == "cauchy")
      return std::make_unique<CauchyRegression>(opt("covariates", std::size_t{5}), opt("rho", 0.1));
    if (name == "normal")
      return std::make_unique<NormalLocation>(opt("sigma", 1.0));
    if (name == "gpd") {
      double threshold = opt("threshold", 0.0);
      if (data != nullptr && !(options.is_object() && options.contains("threshold"))) {
        const double q = opt("threshold_quantile", 0.99);
        if (!(q > 0.0 && q < 1.0))
          throw InvalidArgument("gpd: threshold_quantile must lie in (0, 1)");
        if (data->size() == 0)
          throw InvalidArgument("gpd: cannot place a threshold on empty data");
        std::vector<double> v(data->y.data(), data->y.data() + data->y.size());
        std::sort(v.begin(), v.end());
        threshold = detail::sorted_quantile(v, q);
      }
      return std::make_unique<GpdTail>(threshold, opt("tail_prob", 0.999));
    }
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument("model options: " + std::string(e.what()));
  }
  throw InvalidArgument("unknown model '" + name + "' (expected mixture, cauchy, normal or gpd)");
}

// ---------------------------------------------------------------------------
// configuration

enum class Algorithm
{
  direct,
  method_g,
};

inline std::string to_string(Algorithm a) { return a == Algorithm::direct ? "direct" : "method_g"; }

inline Algorithm parse_algorithm(const std::string& s)
{
  if (s == "direct")
    return Algorithm::direct;
  if (s == "method_g" || s == "method-g")
    return Algorithm::method_g;
  throw InvalidArgument("unknown algorithm '" + s + "' (expected direct or method-g)");
}

inline std::vector<double> default_alpha_grid()
{
  std::vector<double> out;
  for (int i = 1; i <= 19; ++i)
    out.push_back(0.05 * i);
  return out;
}

struct ExperimentConfig
{
  std::string model = "mixture";
  nlohmann::json model_options = nlohmann::json::object();
  std::vector<double> theta;
  std::size_t n = 0;
  std::size_t k = 1;
  std::size_t t = 10000;
  std::optional<std::size_t> burn_in;
  std::size_t thin = 1;
  std::size_t replications = 100;
  std::vector<double> alphas = default_alpha_grid();
  /// Parameter names whose coverage is reported; empty means all.
  std::vector<std::string> parameters;
  std::uint64_t seed = 0;
  Algorithm algorithm = Algorithm::method_g;
  DNorm norm = DNorm::D2;
  /// 0 = hardware concurrency.
  std::size_t concurrency = 0;
  /// Timing experiments only.
  std::vector<std::size_t> k_values;

  ChainConfig chain_config(std::uint64_t seed_for_chain) const
  {
    ChainConfig c;
    c.samples = t;
    c.burn_in = burn_in;
    c.thin = thin;
    c.seed = seed_for_chain;
    return c;
  }

  void validate(const Model& m) const
  {
    if (k < 1)
      throw InvalidArgument("config: K must be at least 1");
    if (n < k * (m.dim() + 1))
      throw InvalidArgument("config: n = " + std::to_string(n) + " is below K (p + 1) = " +
                            std::to_string(k * (m.dim() + 1)));
    if (replications < 1)
      throw InvalidArgument("config: replications must be at least 1");
    for (double a : alphas)
      if (!(a > 0.0 && a < 1.0))
        throw InvalidArgument("config: alpha grid must lie in (0, 1)");
    if (!theta.empty() && theta.size() != m.dim())
      throw InvalidArgument("config: theta has " + std::to_string(theta.size()) +
                            " entries, model expects " + std::to_string(m.dim()));
    if (t < 100)
      throw InvalidArgument("config: T must be at least 100");
    if (thin < 1)
      throw InvalidArgument("config: thin must be at least 1");
    const auto names = m.parameter_names();
    for (const auto& p : parameters)
      if (std::find(names.begin(), names.end(), p) == names.end())
        throw InvalidArgument("config: unknown parameter '" + p + "'");
  }
};

inline ExperimentConfig config_from_json(const nlohmann::json& j)
{
  ExperimentConfig c;
  try {
    if (!j.is_object())
      throw InvalidArgument("config must be a JSON object");
    static const std::vector<std::string> known = {
        "model", "model_options", "theta", "n", "k", "t", "burn_in", "thin", "replications",
        "alphas", "parameters", "seed", "algorithm", "norm", "concurrency", "k_values"};
    for (const auto& [key, _] : j.items())
      if (std::find(known.begin(), known.end(), key) == known.end())
        throw InvalidArgument("config: unknown field '" + key + "'");
    c.model = j.value("model", c.model);
    if (j.contains("model_options"))
      c.model_options = j.at("model_options");
    c.theta = j.value("theta", c.theta);
    c.n = j.value("n", c.n);
    c.k = j.value("k", c.k);
    c.t = j.value("t", c.t);
    if (j.contains("burn_in"))
      c.burn_in = j.at("burn_in").get<std::size_t>();
    c.thin = j.value("thin", c.thin);
    c.replications = j.value("replications", c.replications);
    c.alphas = j.value("alphas", c.alphas);
    c.parameters = j.value("parameters", c.parameters);
    c.seed = j.value("seed", c.seed);
    c.algorithm = parse_algorithm(j.value("algorithm", std::string("method_g")));
    c.norm = parse_dnorm(j.value("norm", std::string("d2")));
    c.concurrency = j.value("concurrency", c.concurrency);
    c.k_values = j.value("k_values", c.k_values);
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument("config: " + std::string(e.what()));
  }
  return c;
}

// ---------------------------------------------------------------------------
// partition

/// Random shuffle of 0..n-1 followed by a contiguous split; the first n mod K
/// blocks get one extra index.
inline std::vector<std::vector<std::size_t>> partition_indices(std::size_t n, std::size_t k,
                                                               std::uint64_t seed)
{
  if (k == 0)
    throw InvalidArgument("partition: K must be positive");
  if (k > n)
    throw InvalidArgument("partition: K = " + std::to_string(k) + " exceeds n = " +
                          std::to_string(n));
  std::vector<std::size_t> perm(n);
  for (std::size_t i = 0; i < n; ++i)
    perm[i] = i;
  Rng rng(seed);
  for (std::size_t i = n; i > 1; --i)
    std::swap(perm[i - 1], perm[rng.below(i)]);
  std::vector<std::vector<std::size_t>> out(k);
  std::size_t pos = 0;
  for (std::size_t b = 0; b < k; ++b) {
    const std::size_t size = n / k + (b < n % k ? 1 : 0);
    out[b].assign(perm.begin() + static_cast<std::ptrdiff_t>(pos),
                  perm.begin() + static_cast<std::ptrdiff_t>(pos + size));
    pos += size;
  }
  return out;
}

inline std::vector<DataSubset> partition(const Dataset& data, std::size_t k, std::uint64_t seed)
{
  const auto blocks = partition_indices(data.size(), k, seed);
  std::vector<DataSubset> out;
  out.reserve(k);
  for (std::size_t b = 0; b < k; ++b)
    out.push_back(select(data, blocks[b], b));
  return out;
}

// ---------------------------------------------------------------------------
// pipeline

struct PhaseTimings
{
  double sampling = 0.0;
  double weighting = 0.0;
  double merging = 0.0;
  double total = 0.0;
};

struct PipelineResult
{
  WeightedSample sample;
  std::vector<FiducialSummary> summaries;
  std::vector<ChainOutput> chains;
  std::vector<MergeRecord> trace;
  std::optional<DirectResult> direct;
  PhaseTimings timings;
  std::vector<std::string> warnings;
};

struct PipelineOptions
{
  SummaryOptions summary;
  bool summarize = true;
};

namespace detail {

class Stopwatch
{
public:
  Stopwatch() : start_(std::chrono::steady_clock::now()) {}
  double seconds() const
  {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

private:
  std::chrono::steady_clock::time_point start_;
};

} // namespace detail

/// Partition, sample every subset, combine, summarize.
///
/// Seeds: partition uses derive_seed(seed, "partition"), worker k's chain
/// derive_seed(seed, "worker", k), merges derive_seed(seed, "merge"). Results
/// depend only on the data and the configuration.
inline PipelineResult run_pipeline(const Model& model, const Dataset& data,
                                   const ExperimentConfig& cfg, const PipelineOptions& opts = {})
{
  validate(data);
  if (model.covariates() != data.covariates())
    throw InvalidArgument("data has " + std::to_string(data.covariates()) +
                          " covariate columns, model expects " + std::to_string(model.covariates()));
  ExperimentConfig local = cfg;
  local.n = data.size();
  local.validate(model);

  detail::Stopwatch total;
  PipelineResult out;
  Cluster cluster(model, partition(data, cfg.k, derive_seed(cfg.seed, "partition")), cfg.concurrency);

  std::vector<ChainConfig> chain_cfgs;
  for (std::size_t k = 0; k < cfg.k; ++k)
    chain_cfgs.push_back(cfg.chain_config(derive_seed(cfg.seed, "worker", k)));
  {
    detail::Stopwatch w;
    try {
      out.chains = cluster.sample_all(chain_cfgs, cfg.norm);
    } catch (const StatisticalFailure& e) {
      throw StatisticalFailure(std::string("sampling phase: ") + e.what());
    }
    out.timings.sampling = w.seconds();
  }

  if (cfg.algorithm == Algorithm::direct) {
    detail::Stopwatch w;
    out.direct = run_direct(out.chains, simplified_weights(cluster));
    out.timings.weighting = w.seconds();
    out.warnings = out.direct->warnings;
    out.sample = out.direct->pooled();
  } else {
    detail::Stopwatch w;
    auto merged = run_method_g(out.chains, cluster, MergePlan::tree(cfg.k), derive_seed(cfg.seed, "merge"));
    out.timings.weighting = merged.weighting_seconds;
    out.timings.merging = w.seconds() - merged.weighting_seconds;
    out.sample = std::move(merged.sample);
    out.trace = std::move(merged.trace);
  }

  if (opts.summarize)
    out.summaries = summarize(out.sample, model.parameter_names(), model.derived_quantities(), opts.summary);
  out.timings.total = total.seconds();
  return out;
}

/// Deterministic summary document (no timings).
inline nlohmann::ordered_json summary_json(const Model& model, const ExperimentConfig& cfg,
                                           const PipelineResult& r)
{
  nlohmann::ordered_json j;
  j["model"] = model.name();
  j["algorithm"] = to_string(cfg.algorithm);
  j["norm"] = to_string(cfg.norm);
  j["n"] = cfg.n;
  j["k"] = cfg.k;
  j["t"] = cfg.t;
  j["seed"] = cfg.seed;
  j["lineage"] = r.sample.lineage;
  auto& params = j["parameters"] = nlohmann::ordered_json::array();
  for (const auto& s : r.summaries)
    params.push_back(to_json(s));
  auto& diag = j["diagnostics"];
  auto& chains = diag["chains"] = nlohmann::ordered_json::array();
  for (const auto& c : r.chains) {
    std::vector<double> ess(c.ess_per_coord.data(), c.ess_per_coord.data() + c.ess_per_coord.size());
    chains.push_back({{"subset", c.subset_id}, {"accept_rate", c.accept_rate}, {"ess", ess}});
  }
  if (r.direct) {
    diag["importance_ess"] = r.direct->ess;
    diag["excluded_subsets"] = r.direct->excluded;
  }
  if (!r.trace.empty()) {
    auto& merges = diag["merges"] = nlohmann::ordered_json::array();
    for (const auto& m : r.trace)
      merges.push_back({{"round", m.round}, {"left", m.left}, {"right", m.right},
                        {"ess_left", m.ess_left}, {"ess_right", m.ess_right}});
  }
  diag["warnings"] = r.warnings;
  return j;
}

// ---------------------------------------------------------------------------
// coverage experiment

inline std::pair<double, double> coverage_band(double alpha, std::size_t m)
{
  const double half = 1.96 * std::sqrt(alpha * (1.0 - alpha) / static_cast<double>(m));
  return {alpha - half, alpha + half};
}

struct CoverageRow
{
  std::string parameter;
  double alpha = 0.0;
  double coverage = 0.0;
  double band_lower = 0.0;
  double band_upper = 0.0;
  bool in_band = false;
};

struct CoverageReport
{
  std::vector<CoverageRow> rows;
  std::size_t replications = 0;
  std::size_t succeeded = 0;
  std::size_t failures = 0;
  bool valid = true;
  std::vector<std::string> failure_messages;
  std::vector<double> replication_seconds;

  /// Fraction of (parameter, alpha) rows inside their band; optionally one parameter.
  double in_band_fraction(const std::string& parameter = {}) const
  {
    std::size_t total = 0, inside = 0;
    for (const auto& r : rows)
      if (parameter.empty() || r.parameter == parameter) {
        ++total;
        inside += r.in_band ? 1 : 0;
      }
    return total == 0 ? 0.0 : static_cast<double>(inside) / static_cast<double>(total);
  }
};

/// Progress hook: (replication index, seconds) after each replication.
using ProgressFn = std::function<void(std::size_t, double)>;

/// M replications of simulate -> pipeline -> one-sided bounds. For level alpha
/// a replication covers when theta_true <= R^-1(alpha); the empirical coverage
/// is judged against alpha +- 1.96 sqrt(alpha (1 - alpha) / M).
///
/// Replication r simulates with derive_seed(seed, "simulate", r) and runs the
/// pipeline with derive_seed(seed, "replication", r). A replication that
/// fails statistically is excluded and counted; more than 5% failures marks
/// the experiment invalid.
inline CoverageReport coverage_experiment(const ExperimentConfig& cfg, const ProgressFn& progress = {})
{
  const auto sim_model = make_model(cfg.model, cfg.model_options);
  if (cfg.theta.size() != sim_model->dim())
    throw InvalidArgument("config: theta must have " + std::to_string(sim_model->dim()) + " entries");
  cfg.validate(*sim_model);
  const ParamVector truth = Eigen::Map<const Eigen::VectorXd>(cfg.theta.data(),
                                                              static_cast<Eigen::Index>(cfg.theta.size()));
  if (!sim_model->in_support(truth))
    throw InvalidArgument("config: true theta outside the model support");

  const auto names = sim_model->parameter_names();
  std::vector<std::size_t> coords;
  if (cfg.parameters.empty()) {
    for (std::size_t j = 0; j < names.size(); ++j)
      coords.push_back(j);
  } else {
    for (const auto& p : cfg.parameters)
      coords.push_back(static_cast<std::size_t>(std::find(names.begin(), names.end(), p) - names.begin()));
  }

  // covered[c][a] counts replications whose bound covers the truth
  std::vector<std::vector<std::size_t>> covered(coords.size(), std::vector<std::size_t>(cfg.alphas.size(), 0));
  CoverageReport report;
  report.replications = cfg.replications;
  PipelineOptions opts;
  opts.summarize = false;

  for (std::size_t r = 0; r < cfg.replications; ++r) {
    detail::Stopwatch w;
    try {
      const Dataset data = sim_model->simulate(truth, cfg.n, derive_seed(cfg.seed, "simulate", r));
      const auto fit_model = make_model(cfg.model, cfg.model_options, &data);
      ExperimentConfig rc = cfg;
      rc.seed = derive_seed(cfg.seed, "replication", r);
      const auto result = run_pipeline(*fit_model, data, rc, opts);
      for (std::size_t c = 0; c < coords.size(); ++c) {
        const StepCdf cdf = marginal_cdf(result.sample, coords[c]);
        for (std::size_t a = 0; a < cfg.alphas.size(); ++a)
          if (truth(static_cast<Eigen::Index>(coords[c])) <= invert_ci(cdf, cfg.alphas[a], Side::lower).upper)
            ++covered[c][a];
      }
      ++report.succeeded;
    } catch (const StatisticalFailure& e) {
      ++report.failures;
      report.failure_messages.push_back("replication " + std::to_string(r) + ": " + e.what());
    }
    report.replication_seconds.push_back(w.seconds());
    if (progress)
      progress(r, report.replication_seconds.back());
  }

  report.valid = static_cast<double>(report.failures) <= 0.05 * static_cast<double>(cfg.replications);
  for (std::size_t c = 0; c < coords.size(); ++c)
    for (std::size_t a = 0; a < cfg.alphas.size(); ++a) {
      CoverageRow row;
      row.parameter = names[coords[c]];
      row.alpha = cfg.alphas[a];
      row.coverage = report.succeeded == 0 ? 0.0
                                           : static_cast<double>(covered[c][a]) /
                                                 static_cast<double>(report.succeeded);
      std::tie(row.band_lower, row.band_upper) = coverage_band(row.alpha, cfg.replications);
      row.in_band = row.coverage >= row.band_lower && row.coverage <= row.band_upper;
      report.rows.push_back(row);
    }
  return report;
}

/// `parameter,alpha,coverage,band_lower,band_upper,in_band`
inline void write_coverage_csv(std::ostream& os, const CoverageReport& r)
{
  os << "parameter,alpha,coverage,band_lower,band_upper,in_band\n";
  for (const auto& row : r.rows)
    os << row.parameter << "," << detail::format_double(row.alpha) << ","
       << detail::format_double(row.coverage) << "," << detail::format_double(row.band_lower) << ","
       << detail::format_double(row.band_upper) << "," << (row.in_band ? 1 : 0) << "\n";
}

/// `replication,seconds`
inline void write_replication_timings_csv(std::ostream& os, const CoverageReport& r)
{
  os << "replication,seconds\n";
  for (std::size_t i = 0; i < r.replication_seconds.size(); ++i)
    os << i << "," << detail::format_double(r.replication_seconds[i]) << "\n";
}

// ---------------------------------------------------------------------------
// timing experiment

struct TimingRow
{
  std::size_t k = 0;
  PhaseTimings timings;
};

/// Wall-clock per K on one simulated dataset (simulated with
/// derive_seed(seed, "simulate", 0)); every K reuses the same data and seed.
inline std::vector<TimingRow> timing_experiment(const ExperimentConfig& cfg)
{
  if (cfg.k_values.size() < 2)
    throw InvalidArgument("timing experiment: >=2 values of K required");
  const auto sim_model = make_model(cfg.model, cfg.model_options);
  if (cfg.theta.size() != sim_model->dim())
    throw InvalidArgument("config: theta must have " + std::to_string(sim_model->dim()) + " entries");
  const ParamVector truth = Eigen::Map<const Eigen::VectorXd>(cfg.theta.data(),
                                                              static_cast<Eigen::Index>(cfg.theta.size()));
  const Dataset data = sim_model->simulate(truth, cfg.n, derive_seed(cfg.seed, "simulate", 0));
  const auto fit_model = make_model(cfg.model, cfg.model_options, &data);
  std::vector<TimingRow> rows;
  PipelineOptions opts;
  opts.summarize = false;
  for (std::size_t k : cfg.k_values) {
    ExperimentConfig c = cfg;
    c.k = k;
    c.validate(*fit_model);
    const auto r = run_pipeline(*fit_model, data, c, opts);
    rows.push_back({k, r.timings});
  }
  return rows;
}

inline void write_timing_csv(std::ostream& os, const std::vector<TimingRow>& rows)
{
  os << "# more workers shorten sampling but add weighting/merging traffic; "
        "total time may rebound past the optimum K\n";
  os << "k,total_seconds,sampling_seconds,weighting_seconds,merging_seconds\n";
  for (const auto& r : rows)
    os << r.k << "," << detail::format_double(r.timings.total) << ","
       << detail::format_double(r.timings.sampling) << ","
       << detail::format_double(r.timings.weighting) << ","
       << detail::format_double(r.timings.merging) << "\n";
}

} // namespace gfi
