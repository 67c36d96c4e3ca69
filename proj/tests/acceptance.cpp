// Acceptance run: one PASS/FAIL line per criterion. Pass criterion numbers as
// arguments to run a subset; exits nonzero if any selected criterion fails.

#include <gfi/gfi.hpp>

#include <boost/math/special_functions/beta.hpp>

#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <numbers>
#include <set>
#include <sstream>
#include <string>
#include <vector>

using namespace gfi;
namespace fs = std::filesystem;

namespace {

constexpr std::uint64_t master_seed = 20240611;

struct Outcome
{
  bool pass = false;
  std::string detail;
};

std::string fmt(double v, int digits = 4)
{
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

void log(const std::string& s)
{
  std::cerr << "  " << s << std::endl;
}

// ---------------------------------------------------------------------------
// coverage criteria

Outcome coverage_criterion(ExperimentConfig cfg, const std::vector<std::size_t>& ks)
{
  Outcome out{true, ""};
  for (std::size_t k : ks) {
    cfg.k = k;
    const auto started = std::chrono::steady_clock::now();
    const auto report = coverage_experiment(cfg);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    const double frac = report.in_band_fraction();
    std::size_t inside = 0;
    for (const auto& r : report.rows)
      inside += r.in_band;
    const bool ok = report.valid && frac >= 0.9;
    out.pass = out.pass && ok;
    out.detail += "K=" + std::to_string(k) + ": " + std::to_string(inside) + "/" +
                  std::to_string(report.rows.size()) + " in band (" + fmt(100 * frac, 1) + "%), " +
                  std::to_string(report.failures) + " failed reps, " + fmt(secs, 0) + "s; ";
    for (const auto& r : report.rows)
      if (!r.in_band)
        log("K=" + std::to_string(k) + " " + r.parameter + " alpha=" + fmt(r.alpha, 2) +
            " coverage=" + fmt(r.coverage, 2) + " band=(" + fmt(r.band_lower) + ", " + fmt(r.band_upper) + ")");
    for (const auto& m : report.failure_messages)
      log(m);
  }
  return out;
}

Outcome criterion1()
{
  ExperimentConfig cfg;
  cfg.model = "mixture";
  cfg.theta = {-1.0, 1.0, 0.6};
  cfg.n = 10000;
  cfg.t = 2000;
  cfg.replications = 100;
  cfg.seed = master_seed;
  return coverage_criterion(cfg, {1, 2, 4});
}

Outcome criterion2()
{
  ExperimentConfig cfg;
  cfg.model = "cauchy";
  cfg.model_options = {{"covariates", 5}, {"rho", 0.1}};
  cfg.theta = {0.0, 1.0, 1.0, 1.0, 0.0, 0.0, 1.0};
  cfg.parameters = {"beta1", "beta4"};
  cfg.n = 10000;
  cfg.t = 2000;
  cfg.replications = 100;
  cfg.seed = master_seed + 1;
  return coverage_criterion(cfg, {1, 4});
}

// ---------------------------------------------------------------------------
// oracle criteria

/// Fiducial CDF of the unit-variance normal mean: trapezoid quadrature of
/// prod phi(y_i - theta) on a fine grid.
class NormalGridOracle
{
public:
  explicit NormalGridOracle(const Dataset& d)
  {
    const double centre = d.y.mean(), sd = 1.0 / std::sqrt(static_cast<double>(d.size()));
    const int n = 20001;
    std::vector<double> logf(n);
    grid_.resize(n);
    for (int i = 0; i < n; ++i) {
      grid_[i] = centre - 10 * sd + 20 * sd * i / (n - 1.0);
      double acc = 0;
      for (Eigen::Index k = 0; k < d.y.size(); ++k)
        acc -= 0.5 * (d.y(k) - grid_[i]) * (d.y(k) - grid_[i]);
      logf[i] = acc;
    }
    const double top = *std::max_element(logf.begin(), logf.end());
    cdf_.assign(n, 0.0);
    for (int i = 1; i < n; ++i)
      cdf_[i] = cdf_[i - 1] + 0.5 * (std::exp(logf[i] - top) + std::exp(logf[i - 1] - top)) * (grid_[i] - grid_[i - 1]);
    for (auto& c : cdf_)
      c /= cdf_.back();
  }

  double operator()(double t) const
  {
    if (t <= grid_.front())
      return 0.0;
    if (t >= grid_.back())
      return 1.0;
    const auto i = static_cast<std::size_t>(std::upper_bound(grid_.begin(), grid_.end(), t) - grid_.begin());
    const double w = (t - grid_[i - 1]) / (grid_[i] - grid_[i - 1]);
    return (1 - w) * cdf_[i - 1] + w * cdf_[i];
  }

private:
  std::vector<double> grid_, cdf_;
};

/// Fiducial CDF of the tail quantile q(scale, shape, rate) of the exceedance
/// model. The fiducial density factorizes into a (scale, shape) part,
/// prod g(z_i) * sqrt(det(A'A)) with A the rows (dz/dscale, dz/dshape), and a
/// Beta(m + 1/2, n - m + 1/2) rate. q increases in the rate, so
/// P(q <= t) = E_{scale,shape}[ I_{rate*(t)}(m + 1/2, n - m + 1/2) ] with
/// rate*(t) = (1 - p)(1 + shape (t - u) / scale)^{1/shape}.
class GpdGridOracle
{
public:
  GpdGridOracle(const Dataset& d, double threshold, double prob) : u_(threshold), p_(prob)
  {
    for (Eigen::Index i = 0; i < d.y.size(); ++i)
      if (d.y(i) > threshold)
        z_.push_back(d.y(i) - threshold);
    m_ = static_cast<double>(z_.size());
    n_ = static_cast<double>(d.size());

    // locate the mode on a coarse grid, then lay a fine grid over the mass
    double best = -std::numeric_limits<double>::infinity(), ls0 = 0, xi0 = 0;
    for (double ls = -3; ls <= 3; ls += 0.02)
      for (double xi = -0.9; xi <= 1.5; xi += 0.01) {
        const double v = log_density(std::exp(ls), xi);
        if (v > best) {
          best = v;
          ls0 = ls;
          xi0 = xi;
        }
      }
    const int nodes = 401;
    const double ls_half = 1.5, xi_half = 1.2;
    std::vector<double> lw;
    for (int a = 0; a < nodes; ++a)
      for (int b = 0; b < nodes; ++b) {
        const double ls = ls0 - ls_half + 2 * ls_half * a / (nodes - 1.0);
        // offset keeps nodes off shape == 0
        const double xi = xi0 - xi_half + 2 * xi_half * (b + 0.5) / nodes;
        const double sc = std::exp(ls);
        // d scale = scale d log scale
        const double v = log_density(sc, xi) + ls;
        if (std::isfinite(v)) {
          scale_.push_back(sc);
          shape_.push_back(xi);
          lw.push_back(v);
        }
      }
    const double top = *std::max_element(lw.begin(), lw.end());
    double total = 0, edge = 0;
    for (std::size_t i = 0; i < lw.size(); ++i) {
      w_.push_back(std::exp(lw[i] - top));
      total += w_.back();
    }
    for (auto& w : w_)
      w /= total;
    // mass near the box boundary bounds the truncation error of every R(t)
    for (std::size_t i = 0; i < w_.size(); ++i)
      if (std::abs(std::log(scale_[i]) - ls0) > 0.95 * ls_half || std::abs(shape_[i] - xi0) > 0.95 * xi_half)
        edge += w_[i];
    if (edge > 1e-4)
      throw std::runtime_error("gpd oracle grid truncates the fiducial mass (" + std::to_string(edge) + ")");
    // drop nodes that cannot move R(t) by more than 1e-9 in total
    std::vector<double> sc, sh, ww;
    for (std::size_t i = 0; i < w_.size(); ++i)
      if (w_[i] > 1e-9 / static_cast<double>(w_.size())) {
        sc.push_back(scale_[i]);
        sh.push_back(shape_[i]);
        ww.push_back(w_[i]);
      }
    scale_ = std::move(sc);
    shape_ = std::move(sh);
    w_ = std::move(ww);
    // Beta(m + 1/2, n - m + 1/2) CDF tabulated for linear interpolation
    beta_cdf_.resize(beta_nodes + 1);
    for (int i = 0; i <= beta_nodes; ++i)
      beta_cdf_[i] = boost::math::ibeta(m_ + 0.5, n_ - m_ + 0.5, static_cast<double>(i) / beta_nodes);
  }

  double operator()(double t) const
  {
    double acc = 0;
    for (std::size_t i = 0; i < w_.size(); ++i) {
      const double s = 1.0 + shape_[i] * (t - u_) / scale_[i];
      double rate_star;
      if (s <= 0.0)
        rate_star = 1.0; // t beyond the upper endpoint for every rate
      else
        rate_star = (1.0 - p_) * std::exp(std::log(s) / shape_[i]);
      rate_star = std::min(rate_star, 1.0);
      const double x = rate_star * beta_nodes;
      const auto j = std::min(static_cast<int>(x), beta_nodes - 1);
      acc += w_[i] * (beta_cdf_[j] + (x - j) * (beta_cdf_[j + 1] - beta_cdf_[j]));
    }
    return acc;
  }

  /// t with oracle CDF equal to `level`, by bisection.
  double quantile(double level) const
  {
    double lo = u_, hi = u_ + 1.0;
    while ((*this)(hi) < level)
      hi = u_ + 2 * (hi - u_);
    for (int it = 0; it < 40; ++it) {
      const double mid = 0.5 * (lo + hi);
      ((*this)(mid) < level ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
  }

private:
  double log_density(double scale, double shape) const
  {
    long double ll = 0, saa = 0, sbb = 0, sab = 0;
    for (double z : z_) {
      const long double a = static_cast<long double>(shape) * z / scale;
      if (1 + a <= 0)
        return -std::numeric_limits<double>::infinity();
      ll += -std::log(static_cast<long double>(scale)) - (1 + 1 / static_cast<long double>(shape)) * std::log1p(a);
      const long double r1 = z / static_cast<long double>(scale);
      const long double r2 = -z / static_cast<long double>(shape) +
                             scale * (1 + a) * std::log1p(a) / (static_cast<long double>(shape) * shape);
      saa += r1 * r1;
      sbb += r2 * r2;
      sab += r1 * r2;
    }
    const long double det = saa * sbb - sab * sab;
    if (!(det > 0))
      return -std::numeric_limits<double>::infinity();
    return static_cast<double>(ll + 0.5 * std::log(det));
  }

  static constexpr int beta_nodes = 200000;
  double u_, p_, m_ = 0, n_ = 0;
  std::vector<double> z_, scale_, shape_, w_, beta_cdf_;
};

std::vector<ChainConfig> chain_configs(std::size_t k, std::size_t t, std::uint64_t seed)
{
  std::vector<ChainConfig> cfgs(k);
  for (std::size_t i = 0; i < k; ++i) {
    cfgs[i].samples = t;
    cfgs[i].seed = derive_seed(seed, "worker", i);
  }
  return cfgs;
}

/// Per (K, t): mean over seeds of |Method G - oracle| and of
/// |exact-weight A1 - simplified-weight A1|.
struct OracleTable
{
  std::map<std::size_t, std::vector<double>> method_g_error, weight_gap;
};

Outcome judge_oracle_table(const OracleTable& table, std::size_t seeds, const std::string& label)
{
  Outcome out{true, ""};
  for (const auto& [k, errs] : table.method_g_error) {
    const auto& gaps = table.weight_gap.at(k);
    double worst_err = 0, worst_gap = 0;
    for (double e : errs)
      worst_err = std::max(worst_err, e / static_cast<double>(seeds));
    for (double g : gaps)
      worst_gap = std::max(worst_gap, g / static_cast<double>(seeds));
    const bool ok = worst_err < 0.02 && worst_gap < 0.01;
    out.pass = out.pass && ok;
    out.detail += "K=" + std::to_string(k) + ": max_t mean|G-" + label + "|=" + fmt(worst_err) +
                  ", max_t mean|exact-simplified weights|=" + fmt(worst_gap, 5) + "; ";
  }
  return out;
}

Outcome criterion3()
{
  const std::size_t seeds = 20, t_len = 10000;
  const std::vector<std::size_t> ks{1, 2, 4};
  const std::vector<double> zs{-1.5, -0.75, 0.0, 0.75, 1.5};
  NormalLocation model;
  OracleTable table;
  for (std::size_t k : ks) {
    table.method_g_error[k].assign(zs.size(), 0.0);
    table.weight_gap[k].assign(zs.size(), 0.0);
  }
  for (std::size_t s = 0; s < seeds; ++s) {
    const std::uint64_t seed = derive_seed(master_seed + 3, "replication", s);
    const Dataset d = model.simulate(ParamVector{{0.0}}, 40, derive_seed(seed, "simulate"));
    const NormalGridOracle oracle(d);
    for (std::size_t k : ks) {
      const auto subsets = partition(d, k, derive_seed(seed, "partition"));
      Cluster cluster(model, subsets);
      const auto chains = cluster.sample_all(chain_configs(k, t_len, seed), DNorm::D2);
      const auto g = run_method_g(chains, cluster, MergePlan::tree(k), derive_seed(seed, "merge"));
      const auto simple = run_direct(chains, simplified_weights(cluster));
      const auto exact = run_direct(chains, exact_weights(model, subsets));
      for (std::size_t i = 0; i < zs.size(); ++i) {
        const double t = d.y.mean() + zs[i] / std::sqrt(40.0);
        const Assertion a = [t](const ParamVector& th) { return th(0) <= t; };
        table.method_g_error[k][i] += std::abs(estimate_R(g.sample, a) - oracle(t));
        table.weight_gap[k][i] += std::abs(exact.estimate(a) - simple.estimate(a));
      }
    }
  }
  return judge_oracle_table(table, seeds, "quadrature");
}

Outcome criterion4()
{
  const std::size_t seeds = 10;
  const std::vector<std::size_t> ks{2, 4, 8};
  NormalMixture model;
  std::map<std::size_t, double> a1_ess;
  double g_min = 0;
  for (std::size_t s = 0; s < seeds; ++s) {
    const std::uint64_t seed = derive_seed(master_seed + 4, "replication", s);
    const Dataset d = model.simulate(ParamVector{{-1.0, 1.0, 0.6}}, 10000, derive_seed(seed, "simulate"));
    for (std::size_t k : ks) {
      Cluster cluster(model, partition(d, k, derive_seed(seed, "partition")));
      const auto chains = cluster.sample_all(chain_configs(k, 2000, seed), DNorm::D2);
      const auto a1 = run_direct(chains, simplified_weights(cluster));
      a1_ess[k] += a1.mean_ess() / static_cast<double>(seeds);
      if (k == 8) {
        const auto g = run_method_g(chains, cluster, MergePlan::tree(k), derive_seed(seed, "merge"));
        g_min += *g.min_merge_ess() / static_cast<double>(seeds);
      }
    }
  }
  const bool decreasing = a1_ess[2] > a1_ess[4] && a1_ess[4] > a1_ess[8];
  Outcome out;
  out.pass = decreasing && g_min > a1_ess[8];
  out.detail = "mean direct ESS K=2: " + fmt(a1_ess[2], 1) + ", K=4: " + fmt(a1_ess[4], 1) +
               ", K=8: " + fmt(a1_ess[8], 1) + "; Method G min merge ESS K=8: " + fmt(g_min, 1);
  return out;
}

int run(const std::string& args)
{
  const std::string cmd = std::string(GFI_CLI_PATH) + " " + args + " 2>/dev/null";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p)
{
  std::ifstream is(p, std::ios::binary);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

Outcome criterion5()
{
  const auto dir = fs::temp_directory_path() / ("gfi_acceptance_" + std::to_string(::getpid()));
  fs::create_directories(dir);
  const auto data = (dir / "data.csv").string();
  Outcome out;
  if (run("simulate --model mixture --theta=-1,1,0.6 --n 10000 --seed 5 --out " + data) != 0) {
    out.detail = "simulate failed";
    return out;
  }
  const std::string fit = "fit --model mixture --data " + data + " --k 4 --t 2000 --seed 7 --out ";
  const auto a = dir / "a.json", b = dir / "b.json";
  const int ra = run(fit + a.string()), rb = run(fit + b.string());
  const std::string sa = slurp(a), sb = slurp(b);
  out.pass = ra == 0 && rb == 0 && !sa.empty() && sa == sb;
  out.detail = "exit codes " + std::to_string(ra) + "/" + std::to_string(rb) + ", " +
               std::to_string(sa.size()) + " bytes, " + (sa == sb ? "identical" : "DIFFERENT");
  fs::remove_all(dir);
  return out;
}

Outcome criterion6()
{
  const std::vector<std::pair<std::string, std::string>> suites{
      {TEST_DNORM_PATH, "DNorm.*:D2.*:DInf.*"},
      {TEST_MODELS_PATH, "*JacobianRows*"},
      {TEST_COMBINER_PATH, "Normalize.*:Resample.*"},
      {TEST_INFERENCE_PATH, "StepCdf.*:InvertCi.*"},
  };
  Outcome out{true, ""};
  for (const auto& [path, filter] : suites) {
    const std::string cmd = path + " --gtest_brief=1 --gtest_filter='" + filter + "' >/dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    const bool ok = WIFEXITED(status) && WEXITSTATUS(status) == 0;
    out.pass = out.pass && ok;
    out.detail += fs::path(path).filename().string() + "[" + filter + "] " + (ok ? "ok" : "FAILED") + "; ";
  }
  return out;
}

Outcome criterion7()
{
  // heavy-tailed simulated data: 20% exceedances of a shape-0.2 GPD
  const std::size_t seeds = 20, t_len = 40000, n = 500;
  const double prob = 0.99;
  const std::vector<std::size_t> ks{1, 2, 4};
  const std::vector<double> levels{0.1, 0.3, 0.5, 0.7, 0.9};
  const GpdTail truth_model(0.0, prob);
  const ParamVector truth{{1.0, 0.2, 0.2}};
  OracleTable table;
  for (std::size_t k : ks) {
    table.method_g_error[k].assign(levels.size(), 0.0);
    table.weight_gap[k].assign(levels.size(), 0.0);
  }
  for (std::size_t s = 0; s < seeds; ++s) {
    const std::uint64_t seed = derive_seed(master_seed + 7, "replication", s);
    const Dataset d = truth_model.simulate(truth, n, derive_seed(seed, "simulate"));
    const auto model = make_model("gpd", {{"threshold_quantile", 0.8}, {"tail_prob", prob}}, &d);
    const auto& gpd = dynamic_cast<const GpdTail&>(*model);
    const GpdGridOracle oracle(d, gpd.threshold(), prob);
    std::vector<double> ts;
    for (double l : levels)
      ts.push_back(oracle.quantile(l));
    for (std::size_t k : ks) {
      const auto subsets = partition(d, k, derive_seed(seed, "partition"));
      Cluster cluster(*model, subsets);
      const auto chains = cluster.sample_all(chain_configs(k, t_len, seed), DNorm::D2);
      const auto g = run_method_g(chains, cluster, MergePlan::tree(k), derive_seed(seed, "merge"));
      const auto simple = run_direct(chains, simplified_weights(cluster));
      const auto exact = run_direct(chains, exact_weights(*model, subsets));
      for (std::size_t i = 0; i < ts.size(); ++i) {
        const double t = ts[i];
        const Assertion a = [&gpd, t](const ParamVector& th) { return gpd.quantile(th) <= t; };
        table.method_g_error[k][i] += std::abs(estimate_R(g.sample, a) - levels[i]);
        table.weight_gap[k][i] += std::abs(exact.estimate(a) - simple.estimate(a));
      }
    }
  }
  return judge_oracle_table(table, seeds, "quadrature");
}

} // namespace

int main(int argc, char** argv)
{
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"mixture coverage (n=10^4, K in {1,2,4}, M=100)", criterion1},
      {"Cauchy regression coverage (n=10^4, K in {1,4}, M=100)", criterion2},
      {"normal-location oracle equivalence (n=40, K in {1,2,4}, 20 seeds)", criterion3},
      {"efficiency ordering (mixture n=10^4, K in {2,4,8}, 10 seeds)", criterion4},
      {"deterministic replay of fit", criterion5},
      {"unit/property suites", criterion6},
      {"GPD tail-quantile oracle checks (n=500, K in {1,2,4}, 20 seeds)", criterion7},
  };
  std::set<int> selected;
  for (int i = 1; i < argc; ++i)
    selected.insert(std::atoi(argv[i]));

  bool all = true;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i + 1);
    if (!selected.empty() && !selected.contains(id))
      continue;
    const auto started = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    all = all && o.pass;
    std::cout << "CRITERION " << id << " " << (o.pass ? "PASS" : "FAIL") << " " << criteria[i].first
              << " -- " << o.detail << "[" << fmt(secs, 1) << "s]" << std::endl;
  }
  return all ? 0 : 1;
}
