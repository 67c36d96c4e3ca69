#include <gfi/models/cauchy_regression.hpp>
#include <gfi/models/gpd_tail.hpp>
#include <gfi/models/normal_location.hpp>
#include <gfi/models/normal_mixture.hpp>
#include <gfi/sampler.hpp>

#include <gtest/gtest.h>

#include <cmath>
#include <memory>
#include <sstream>
#include <vector>

using namespace gfi;

namespace {

std::vector<double> ar1(double phi, std::size_t n, std::uint64_t seed)
{
  Rng rng(seed);
  std::vector<double> x(n);
  double v = rng.normal() / std::sqrt(1 - phi * phi);
  for (auto& e : x) {
    v = phi * v + rng.normal();
    e = v;
  }
  return x;
}

// Location model whose support is the single point 0: no proposal can move.
class PinnedLocation : public Model
{
public:
  std::string name() const override { return "pinned"; }
  std::size_t dim() const override { return 1; }
  std::vector<std::string> parameter_names() const override { return {"mu"}; }
  bool in_support(const ParamVector& t) const override { return t.size() == 1 && t(0) == 0.0; }
  ParamVector to_unconstrained(const ParamVector& t) const override { return t; }
  ParamVector from_unconstrained(const ParamVector& e) const override { return e; }
  double log_abs_det_transform(const ParamVector&) const override { return 0.0; }
  double log_likelihood(const Dataset& d, const ParamVector& t) const override { return base_.log_likelihood(d, t); }
  JacobianMatrix jacobian(const Dataset& d, const ParamVector& t) const override { return base_.jacobian(d, t); }
  Dataset simulate(const ParamVector& t, std::size_t n, std::uint64_t seed) const override
  {
    return base_.simulate(t, n, seed);
  }
  ParamVector initial_guess(const Dataset&) const override { return ParamVector{{0.0}}; }

private:
  NormalLocation base_;
};

} // namespace

TEST(Ess, IidSeries)
{
  const auto x = ar1(0.0, 10000, 1);
  EXPECT_NEAR(effective_sample_size(x), 10000.0, 1500.0);
}

TEST(Ess, AlternatingSeriesIsClampedToT)
{
  std::vector<double> x(1000);
  for (std::size_t i = 0; i < x.size(); ++i)
    x[i] = i % 2 == 0 ? 1.0 : -1.0;
  EXPECT_EQ(effective_sample_size(x), 1000.0);
}

TEST(Ess, Ar1ClosedForm)
{
  const auto x = ar1(0.9, 100000, 2);
  const double expected = 100000.0 * 0.1 / 1.9;
  EXPECT_NEAR(effective_sample_size(x), expected, 0.2 * expected);
}

TEST(Ess, ConstantSeriesAndShortInput)
{
  EXPECT_EQ(effective_sample_size(std::vector<double>(50, 3.0)), 1.0);
  EXPECT_THROW(effective_sample_size(std::vector<double>(9, 1.0)), InvalidArgument);
}

TEST(Ess, AlwaysInRange)
{
  for (double phi : {-0.95, -0.5, 0.0, 0.5, 0.99}) {
    const auto x = ar1(phi, 500, 3);
    const double e = effective_sample_size(x);
    EXPECT_GT(e, 0.0);
    EXPECT_LE(e, 500.0);
  }
}

TEST(Chain, ThinningBookkeeping)
{
  NormalLocation m;
  const DataSubset s = as_subset(m.simulate(ParamVector{{1.0}}, 20, 1));
  ChainConfig cfg;
  cfg.samples = 100;
  cfg.thin = 2;
  cfg.seed = 3;
  const auto out = run_chain(m, s, cfg);
  EXPECT_EQ(out.particles.rows(), 100);
  EXPECT_EQ(out.particles.cols(), 1);
  EXPECT_EQ(out.log_density.size(), 100);
  ASSERT_TRUE(out.last_adaptation_step.has_value());
  EXPECT_EQ(*out.last_adaptation_step, 49u); // burn-in defaults to T / 2
}

TEST(Chain, Deterministic)
{
  NormalMixture m;
  const DataSubset s = as_subset(m.simulate(ParamVector{{-1.0, 1.0, 0.6}}, 500, 2));
  ChainConfig cfg;
  cfg.samples = 500;
  cfg.seed = 11;
  const auto a = run_chain(m, s, cfg), b = run_chain(m, s, cfg);
  EXPECT_EQ(a.particles, b.particles);
  EXPECT_EQ(a.log_density, b.log_density);
  EXPECT_EQ(a.accept_rate, b.accept_rate);
  cfg.seed = 12;
  EXPECT_NE(run_chain(m, s, cfg).particles, a.particles);
}

TEST(Chain, RecordedLogDensityMatchesModel)
{
  CauchyRegression m(1);
  const DataSubset s = as_subset(m.simulate(ParamVector{{0.0, 1.0, 1.0}}, 100, 3));
  ChainConfig cfg;
  cfg.samples = 200;
  const auto out = run_chain(m, s, cfg);
  for (Eigen::Index t = 0; t < out.particles.rows(); t += 17) {
    const double v = log_fiducial_density(m, s, out.particles.row(t).transpose());
    EXPECT_NEAR(out.log_density(t), v, 1e-8 * std::abs(v));
  }
}

TEST(Chain, NoAdaptationAfterBurnIn)
{
  GpdTail m(0.0, 0.99);
  const DataSubset s = as_subset(m.simulate(ParamVector{{1.0, 0.2, 0.3}}, 300, 4));
  for (std::size_t burn : {0u, 1u, 150u, 1000u}) {
    ChainConfig cfg;
    cfg.samples = 300;
    cfg.burn_in = burn;
    const auto out = run_chain(m, s, cfg);
    if (burn == 0) {
      EXPECT_FALSE(out.last_adaptation_step.has_value());
    } else {
      ASSERT_TRUE(out.last_adaptation_step.has_value());
      EXPECT_LT(*out.last_adaptation_step, burn);
    }
  }
}

TEST(Chain, ParticlesStayInSupport)
{
  NormalMixture m;
  const DataSubset s = as_subset(m.simulate(ParamVector{{-1.0, 1.0, 0.6}}, 300, 5));
  ChainConfig cfg;
  cfg.samples = 1000;
  const auto out = run_chain(m, s, cfg);
  for (Eigen::Index t = 0; t < out.particles.rows(); ++t)
    ASSERT_TRUE(m.in_support(out.particles.row(t).transpose()));
  for (Eigen::Index j = 0; j < 3; ++j) {
    EXPECT_GT(out.ess_per_coord(j), 0.0);
    EXPECT_LE(out.ess_per_coord(j), 1000.0);
  }
}

TEST(Chain, AcceptanceRateInRange)
{
  struct Case
  {
    std::shared_ptr<Model> model;
    ParamVector theta;
    std::size_t n;
  };
  const std::vector<Case> cases{
      {std::make_shared<NormalMixture>(), ParamVector{{-1.0, 1.0, 0.6}}, 1000},
      {std::make_shared<NormalMixture>(), ParamVector{{-1.0, 1.0, 0.6}}, 10000},
      {std::make_shared<CauchyRegression>(5), ParamVector{{0, 1, 1, 1, 0, 0, 1}}, 2500},
      {std::make_shared<NormalLocation>(), ParamVector{{0.5}}, 40},
      {std::make_shared<NormalLocation>(), ParamVector{{0.5}}, 10},
      {std::make_shared<GpdTail>(0.0, 0.99), ParamVector{{1.0, 0.2, 0.2}}, 500},
  };
  for (const auto& c : cases) {
    const DataSubset s = as_subset(c.model->simulate(c.theta, c.n, 6));
    ChainConfig cfg;
    cfg.samples = 2000;
    cfg.seed = 7;
    const auto out = run_chain(*c.model, s, cfg);
    EXPECT_GE(out.accept_rate, 0.1) << c.model->name() << " n=" << c.n;
    EXPECT_LE(out.accept_rate, 0.5) << c.model->name() << " n=" << c.n;
  }
}

TEST(Chain, MixtureCentredOnTruth)
{
  NormalMixture m;
  const ParamVector truth{{-1.0, 1.0, 0.6}};
  const DataSubset s = as_subset(m.simulate(truth, 10000, 8));
  ChainConfig cfg;
  cfg.samples = 2000;
  cfg.seed = 9;
  const auto out = run_chain(m, s, cfg);
  for (Eigen::Index j = 0; j < 3; ++j) {
    const auto col = out.particles.col(j);
    const double mean = col.mean();
    const double sd = std::sqrt((col.array() - mean).square().sum() / (col.size() - 1.0));
    // the fiducial spread is the standard error of the estimate
    EXPECT_LT(std::abs(mean - truth(j)), 4.0 * sd) << "coordinate " << j;
  }
}

TEST(Chain, MatchesGridNormalizedDensity)
{
  // chi-square goodness of fit of a long thinned chain against the
  // fiducial density normalized by quadrature on a fine grid
  NormalLocation m(1.0);
  const DataSubset s = as_subset(m.simulate(ParamVector{{0.3}}, 6, 10));
  ChainConfig cfg;
  cfg.samples = 100000;
  cfg.burn_in = 2000;
  cfg.thin = 10;
  cfg.seed = 11;
  const auto out = run_chain(m, s, cfg);

  const double centre = s.data.y.mean(), sd = 1.0 / std::sqrt(6.0);
  const int bins = 30;
  const double lo = centre - 4 * sd, hi = centre + 4 * sd, width = (hi - lo) / bins;
  std::vector<double> mass(bins + 2, 0.0);
  const int fine = 400;
  double total = 0;
  for (int i = 0; i < (bins + 40) * fine; ++i) {
    const double t = lo - 20 * width + (i + 0.5) * width / fine;
    const double w = std::exp(log_fiducial_density(m, s, ParamVector{{t}}));
    total += w;
    const int b = t < lo ? 0 : t >= hi ? bins + 1 : 1 + static_cast<int>((t - lo) / width);
    mass[static_cast<std::size_t>(std::min(b, bins + 1))] += w;
  }
  std::vector<double> counts(bins + 2, 0.0);
  for (Eigen::Index r = 0; r < out.particles.rows(); ++r) {
    const double t = out.particles(r, 0);
    const int b = t < lo ? 0 : t >= hi ? bins + 1 : 1 + static_cast<int>((t - lo) / width);
    counts[static_cast<std::size_t>(std::min(b, bins + 1))] += 1;
  }
  // pool the two tails so every expected count is large
  double chi2 = 0;
  const double n = static_cast<double>(out.particles.rows());
  const double tail_e = n * (mass[0] + mass[bins + 1]) / total;
  const double tail_o = counts[0] + counts[bins + 1];
  chi2 += (tail_o - tail_e) * (tail_o - tail_e) / tail_e;
  for (int b = 1; b <= bins; ++b) {
    const double e = n * mass[static_cast<std::size_t>(b)] / total;
    chi2 += (counts[static_cast<std::size_t>(b)] - e) * (counts[static_cast<std::size_t>(b)] - e) / e;
  }
  // 30 degrees of freedom: upper 0.001 point
  EXPECT_LT(chi2, 59.70);
}

TEST(Chain, FailsToMixWhenNothingIsAccepted)
{
  PinnedLocation m;
  const DataSubset s = as_subset(m.simulate(ParamVector{{0.0}}, 10, 1));
  ChainConfig cfg;
  cfg.samples = 100;
  cfg.init = ParamVector{{0.0}};
  try {
    run_chain(m, s, cfg);
    FAIL();
  } catch (const StatisticalFailure& e) {
    EXPECT_NE(std::string(e.what()).find("chain failed to mix"), std::string::npos);
  }
}

TEST(Chain, RejectsBadConfiguration)
{
  NormalMixture m;
  const DataSubset s = as_subset(m.simulate(ParamVector{{-1.0, 1.0, 0.6}}, 100, 1));
  ChainConfig cfg;
  cfg.samples = 99;
  EXPECT_THROW(run_chain(m, s, cfg), InvalidArgument);
  cfg.samples = 100;
  cfg.thin = 0;
  EXPECT_THROW(run_chain(m, s, cfg), InvalidArgument);
  cfg.thin = 1;
  cfg.init = ParamVector{{1.0, -1.0, 0.5}};
  EXPECT_THROW(run_chain(m, s, cfg), InvalidArgument);
  cfg.init.reset();
  EXPECT_THROW(run_chain(m, as_subset(m.simulate(ParamVector{{-1.0, 1.0, 0.6}}, 2, 1)), cfg),
               InvalidArgument);
}

TEST(Chain, SubsetMleIsNearTruth)
{
  NormalMixture m;
  const Dataset d = m.simulate(ParamVector{{-1.0, 1.0, 0.6}}, 5000, 12);
  const ParamVector mle = subset_mle(m, d);
  EXPECT_NEAR(mle(0), -1.0, 0.15);
  EXPECT_NEAR(mle(1), 1.0, 0.15);
  EXPECT_NEAR(mle(2), 0.6, 0.08);
}

TEST(Chain, CsvDump)
{
  NormalLocation m;
  const DataSubset s = as_subset(m.simulate(ParamVector{{0.0}}, 10, 1));
  ChainConfig cfg;
  cfg.samples = 100;
  const auto out = run_chain(m, s, cfg);
  std::stringstream ss;
  write_chain_csv(ss, out, m.parameter_names());
  std::string line;
  std::getline(ss, line);
  EXPECT_EQ(line, "t,mu,log_density");
  int rows = 0;
  while (std::getline(ss, line))
    ++rows;
  EXPECT_EQ(rows, 100);
}
