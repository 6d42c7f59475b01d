#include <algorithm>
#include <atomic>
#include <cmath>
#include <numeric>
#include <random>

#include <gtest/gtest.h>

#include "dbsc/replication.hpp"
#include "support.hpp"

using namespace dbsc;

namespace {

// Cheap estimator with a known relationship to the truth.
struct NoisyEstimator {
  ReplicateEstimate operator()(const PanelData& panel, const SimTruth& truth, const PriorSpec& prior,
                               const McmcConfig& mcmc, double) const {
    Rng rng(derive_seed(mcmc.seed, static_cast<std::uint64_t>(prior.kappa_d * 1000)));
    const double est = truth.tau_true + rng.normal() + panel.donor_outcomes(0, 0) * 1e-3;
    return {est, est - 2.0, est + 2.0};
  }
};

struct ExactEstimator {
  ReplicateEstimate operator()(const PanelData&, const SimTruth& t, const PriorSpec&, const McmcConfig&,
                               double) const {
    return {t.tau_true, t.tau_true, t.tau_true};
  }
};

struct FailingEstimator {
  int fail_every;
  ReplicateEstimate operator()(const PanelData&, const SimTruth& t, const PriorSpec&, const McmcConfig& m,
                               double) const {
    if (m.seed % fail_every == 0) throw NumericalError("boom");
    return {t.tau_true, t.tau_true - 1, t.tau_true + 1};
  }
};

ReplicationPlan small_plan(int R) {
  ReplicationPlan p;
  p.n_replicates = R;
  p.sim.J = 10;
  p.sim.T0 = 10;
  p.sim.seed = 123;
  p.prior.exclusion_fraction = 0.25;
  p.mcmc.n_iterations = 200;
  p.kappa_grid = {0.0, 1.0};
  p.spill_grid = {0.0, 0.5};
  return p;
}

}  // namespace

TEST(Metrics, RelativeBias) {
  EXPECT_EQ(relative_bias({7, 7, 7}, 7), 0.0);
  EXPECT_EQ(relative_bias({14, 14}, 7), 1.0);
  EXPECT_EQ(relative_bias({6, 8}, 7), 0.0);
  EXPECT_THROW(relative_bias({1.0}, 0.0), ValidationError);
}

TEST(Metrics, Rmse) {
  EXPECT_EQ(rmse({7, 7}, 7), 0.0);
  EXPECT_DOUBLE_EQ(rmse({10, 10, 10}, 7), 3.0);
  EXPECT_DOUBLE_EQ(rmse({6, 8}, 7), 1.0);
}

TEST(Metrics, Coverage) {
  EXPECT_EQ(coverage({{7, 7}, {7, 7}}, 7), 1.0);
  EXPECT_EQ(coverage({{1, 2}, {3, 6.9}}, 7), 0.0);
  EXPECT_EQ(coverage({{6, 8}, {1, 2}}, 7), 0.5);
}

TEST(Metrics, IdentityOnRandomSamples) {
  Rng rng(1);
  for (int trial = 0; trial < 500; ++trial) {
    std::vector<double> x(1 + static_cast<int>(rng.uniform(0, 300)));
    for (double& v : x) v = rng.normal(7, 3);
    const double truth = rng.uniform(1, 10);
    const double bias = std::accumulate(x.begin(), x.end(), 0.0) / x.size() - truth;
    const double r = rmse(x, truth);
    EXPECT_NEAR(r * r, population_variance(x) + bias * bias, 1e-10);
    EXPECT_GE(r + 1e-12, std::abs(bias));
  }
}

TEST(Run, SingleReplicateEqualsItsOwnValues) {
  ReplicationPlan p = small_plan(1);
  const auto res = run(p, NoisyEstimator{});
  ASSERT_EQ(res.cells.size(), 4u);
  for (const auto& c : res.cells) {
    ASSERT_EQ(c.estimates.size(), 1u);
    EXPECT_DOUBLE_EQ(c.relative_bias, (c.estimates[0] - 7.0) / 7.0);
    EXPECT_DOUBLE_EQ(c.rmse, std::abs(c.estimates[0] - 7.0));
    EXPECT_TRUE(c.coverage == 0.0 || c.coverage == 1.0);
    EXPECT_DOUBLE_EQ(c.mean_interval_width, 4.0);
  }
}

TEST(Run, ExactEstimatorGivesPerfectMetrics) {
  const auto res = run(small_plan(20), ExactEstimator{});
  for (const auto& c : res.cells) {
    EXPECT_EQ(c.relative_bias, 0.0);
    EXPECT_EQ(c.rmse, 0.0);
    EXPECT_EQ(c.coverage, 1.0);
    EXPECT_EQ(c.n_successful, 20);
  }
}

TEST(Run, CellOrderIsSpillMajor) {
  const auto res = run(small_plan(2), ExactEstimator{});
  EXPECT_EQ(res.cells[0].spill_fraction, 0.0);
  EXPECT_EQ(res.cells[1].kappa_d, 1.0);
  EXPECT_EQ(res.cells[2].spill_fraction, 0.5);
  EXPECT_EQ(res.cells[2].kappa_d, 0.0);
}

TEST(Run, ExecutionOrderAndParallelismDoNotChangeMetrics) {
  ReplicationPlan p = small_plan(30);
  const auto a = run(p, NoisyEstimator{});
  std::vector<int> order(60);
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), std::mt19937_64(5));
  const auto b = run(p, NoisyEstimator{}, order);
  p.parallelism = 3;
  const auto c = run(p, NoisyEstimator{});
  for (std::size_t i = 0; i < a.cells.size(); ++i) {
    EXPECT_EQ(a.cells[i].estimates, b.cells[i].estimates);
    EXPECT_EQ(a.cells[i].rmse, b.cells[i].rmse);
    EXPECT_EQ(a.cells[i].relative_bias, c.cells[i].relative_bias);
    EXPECT_EQ(a.cells[i].coverage, c.cells[i].coverage);
  }
}

TEST(Run, FailuresExcludedAndCountedUpToLimit) {
  ReplicationPlan p = small_plan(40);
  p.max_failure_rate = 0.05;
  std::atomic<int> calls{0};
  // Fail exactly one replicate (2.5%).
  const std::uint64_t bad_seed = replicate_mcmc_seed(p.sim.seed, 7);
  struct OneBad {
    std::uint64_t bad;
    ReplicateEstimate operator()(const PanelData&, const SimTruth& t, const PriorSpec&, const McmcConfig& m,
                                 double) const {
      if (m.seed == bad) throw NumericalError("boom");
      return {t.tau_true, t.tau_true, t.tau_true};
    }
  };
  const auto res = run(p, OneBad{bad_seed});
  for (const auto& c : res.cells) {
    EXPECT_EQ(c.n_failed, 1);
    EXPECT_EQ(c.n_successful, 39);
    EXPECT_EQ(std::find(c.replicate_index.begin(), c.replicate_index.end(), 7), c.replicate_index.end());
  }
  (void)calls;
  EXPECT_THROW(run(p, FailingEstimator{2}), NumericalError);
}

TEST(Run, PlanViolations) {
  ReplicationPlan p = small_plan(0);
  EXPECT_THROW(run(p, ExactEstimator{}), ValidationError);
  ReplicationPlan q = small_plan(5);
  q.kappa_grid.clear();
  EXPECT_FALSE(q.violations().empty());
}

TEST(Run, CommonDataAcrossKappaCells) {
  struct Recorder {
    ReplicateEstimate operator()(const PanelData& panel, const SimTruth& t, const PriorSpec&, const McmcConfig&,
                                 double) const {
      return {panel.treated_outcomes(0), t.tau_true, t.tau_true};
    }
  };
  const auto res = run(small_plan(5), Recorder{});
  EXPECT_EQ(res.cells[0].estimates, res.cells[1].estimates);
  EXPECT_EQ(res.cells[0].estimates, res.cells[3].estimates);  // pre-period data shared across spill levels too
}

TEST(Run, PipelineEstimatorRespectsSpikes) {
  ReplicationPlan p = small_plan(3);
  std::atomic<int> fits{0};
  std::atomic<bool> zero{true};
  PipelineEstimator est{[&](const Analysis& a) {
    ++fits;
    if (!spike_coefficients_are_zero(a.draws)) zero = false;
  }};
  const auto res = run(p, est);
  EXPECT_EQ(fits.load(), 12);
  EXPECT_TRUE(zero.load());
  for (const auto& c : res.cells) EXPECT_EQ(c.n_successful, 3);
}

// Directional stress check: at kappa_d = 1 the bias grows with spillover.
TEST(Run, BiasRisesWithSpilloverAtKappaOne) {
  ReplicationPlan p;
  p.n_replicates = 200;
  p.sim.seed = 20240601;
  p.prior.exclusion_fraction = 0.25;
  p.mcmc.n_iterations = 4000;
  p.kappa_grid = {1.0};
  p.spill_grid = {0.0, 0.5};
  const auto res = run(p);
  EXPECT_GT(std::abs(res.cells[1].relative_bias), std::abs(res.cells[0].relative_bias));
}
