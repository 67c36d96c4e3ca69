// gfi: command-line front end for the distributed fiducial inference engine.

#include <gfi/gfi.hpp>

#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

namespace {

constexpr int exit_invalid = 2;
constexpr int exit_statistical = 3;

std::ofstream open_out(const std::string& path)
{
  std::ofstream os(path);
  if (!os)
    throw gfi::InvalidArgument("cannot open '" + path + "' for writing");
  return os;
}

gfi::ExperimentConfig load_config(const std::string& path)
{
  std::ifstream is(path);
  if (!is)
    throw gfi::InvalidArgument("cannot open config '" + path + "'");
  nlohmann::json j;
  try {
    is >> j;
  } catch (const nlohmann::json::exception& e) {
    throw gfi::InvalidArgument("config '" + path + "': " + e.what());
  }
  return gfi::config_from_json(j);
}

nlohmann::json parse_options(const std::string& text)
{
  if (text.empty())
    return nlohmann::json::object();
  try {
    return nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw gfi::InvalidArgument(std::string("--model-options: ") + e.what());
  }
}

int cmd_simulate(const std::string& model_name, const std::string& options,
                 const std::vector<double>& theta, std::size_t n, std::uint64_t seed,
                 const std::string& out)
{
  const auto model = gfi::make_model(model_name, parse_options(options));
  if (theta.size() != model->dim())
    throw gfi::InvalidArgument("--theta needs " + std::to_string(model->dim()) + " values");
  const gfi::ParamVector t = Eigen::Map<const Eigen::VectorXd>(theta.data(),
                                                               static_cast<Eigen::Index>(theta.size()));
  if (!model->in_support(t))
    throw gfi::InvalidArgument("--theta lies outside the model support");
  gfi::write_csv(out, model->simulate(t, n, seed));
  return 0;
}

struct FitArgs
{
  std::string model = "mixture";
  std::string options;
  std::string data;
  std::size_t k = 1;
  std::size_t t = 10000;
  std::string algorithm = "method-g";
  std::string norm = "d2";
  std::uint64_t seed = 0;
  std::size_t concurrency = 0;
  std::string out;
  std::string dump_chains;
  std::string trace;
  std::string curves;
};

int cmd_fit(const FitArgs& a)
{
  const gfi::Dataset data = gfi::read_csv(a.data);
  const auto model = gfi::make_model(a.model, parse_options(a.options), &data);
  gfi::ExperimentConfig cfg;
  cfg.model = a.model;
  cfg.n = data.size();
  cfg.k = a.k;
  cfg.t = a.t;
  cfg.algorithm = gfi::parse_algorithm(a.algorithm);
  cfg.norm = gfi::parse_dnorm(a.norm);
  cfg.seed = a.seed;
  cfg.concurrency = a.concurrency;

  const auto result = gfi::run_pipeline(*model, data, cfg);
  for (const auto& w : result.warnings)
    std::cerr << "warning: " << w << "\n";

  open_out(a.out) << gfi::summary_json(*model, cfg, result).dump(2) << "\n";
  if (!a.curves.empty()) {
    auto os = open_out(a.curves);
    gfi::write_curves_csv(os, result.summaries);
  }
  if (!a.trace.empty()) {
    auto os = open_out(a.trace);
    gfi::write_merge_trace(os, result.trace);
  }
  if (!a.dump_chains.empty()) {
    std::filesystem::create_directories(a.dump_chains);
    for (const auto& c : result.chains) {
      auto os = open_out((std::filesystem::path(a.dump_chains) /
                          ("chain_" + std::to_string(c.subset_id) + ".csv"))
                             .string());
      gfi::write_chain_csv(os, c, model->parameter_names());
    }
  }
  std::cerr << "sampling " << result.timings.sampling << " s, weighting "
            << result.timings.weighting << " s, merging " << result.timings.merging
            << " s, total " << result.timings.total << " s\n";
  return 0;
}

int cmd_coverage(const std::string& config, const std::string& out)
{
  const auto cfg = load_config(config);
  if (cfg.replications < 30)
    std::cerr << "warning: M = " << cfg.replications << " < 30, coverage bands are unreliable\n";
  const auto report = gfi::coverage_experiment(cfg, [&](std::size_t r, double s) {
    std::cerr << "replication " << r + 1 << "/" << cfg.replications << " " << s << " s\n";
  });
  {
    auto os = open_out(out);
    gfi::write_coverage_csv(os, report);
  }
  const auto stem = std::filesystem::path(out).replace_extension("");
  auto os = open_out(stem.string() + "_timings.csv");
  gfi::write_replication_timings_csv(os, report);
  for (const auto& m : report.failure_messages)
    std::cerr << "failed " << m << "\n";
  std::cerr << "in band: " << report.in_band_fraction() * 100.0 << "% of grid points\n";
  if (!report.valid) {
    std::cerr << "error: experiment invalid, " << report.failures << " of "
              << report.replications << " replications failed\n";
    return exit_statistical;
  }
  return 0;
}

int cmd_timing(const std::string& config, const std::string& out)
{
  const auto rows = gfi::timing_experiment(load_config(config));
  auto os = open_out(out);
  gfi::write_timing_csv(os, rows);
  return 0;
}

} // namespace

int main(int argc, char** argv)
{
  CLI::App app{"Distributed generalized fiducial inference"};
  app.require_subcommand(1);

  std::string model = "mixture", options, out;
  std::vector<double> theta;
  std::size_t n = 0;
  std::uint64_t seed = 0;
  auto* sim = app.add_subcommand("simulate", "Simulate a dataset from a model");
  sim->add_option("--model", model, "mixture | cauchy | normal | gpd")->required();
  sim->add_option("--model-options", options, "JSON object of model options");
  sim->add_option("--theta", theta, "True parameter vector")->required()->delimiter(',');
  sim->add_option("--n", n, "Number of observations")->required();
  sim->add_option("--seed", seed, "Random seed");
  sim->add_option("--out", out, "Output CSV")->required();

  FitArgs fa;
  auto* fit = app.add_subcommand("fit", "Fit a fiducial distribution to a dataset");
  fit->add_option("--model", fa.model, "mixture | cauchy | normal | gpd")->required();
  fit->add_option("--model-options", fa.options, "JSON object of model options");
  fit->add_option("--data", fa.data, "Input CSV")->required();
  fit->add_option("--k", fa.k, "Number of workers");
  fit->add_option("--t", fa.t, "Samples per chain");
  fit->add_option("--algorithm", fa.algorithm, "direct | method-g");
  fit->add_option("--norm", fa.norm, "d2 | dinf");
  fit->add_option("--seed", fa.seed, "Master seed");
  fit->add_option("--concurrency", fa.concurrency, "Worker thread limit (0 = all cores)");
  fit->add_option("--out", fa.out, "Summary JSON")->required();
  fit->add_option("--dump-chains", fa.dump_chains, "Directory for per-worker chain CSVs");
  fit->add_option("--trace", fa.trace, "Merge trace (JSON lines)");
  fit->add_option("--curves", fa.curves, "Confidence-curve CSV");

  std::string config;
  auto* cov = app.add_subcommand("coverage", "Run a coverage experiment");
  cov->add_option("--config", config, "Experiment JSON")->required();
  cov->add_option("--out", out, "Report CSV")->required();

  auto* tim = app.add_subcommand("timing", "Run a timing experiment over K");
  tim->add_option("--config", config, "Experiment JSON")->required();
  tim->add_option("--out", out, "Timing CSV")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : exit_invalid;
  }

  try {
    if (*sim)
      return cmd_simulate(model, options, theta, n, seed, out);
    if (*fit)
      return cmd_fit(fa);
    if (*cov)
      return cmd_coverage(config, out);
    return cmd_timing(config, out);
  } catch (const gfi::StatisticalFailure& e) {
    std::cerr << "statistical failure: " << e.what() << "\n";
    return exit_statistical;
  } catch (const gfi::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_invalid;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_invalid;
  }
}
