#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <exception>
#include <functional>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "dbsc/error.hpp"
#include "dbsc/pipeline.hpp"
#include "dbsc/simgen.hpp"

namespace dbsc {

// ---- metrics --------------------------------------------------------------

inline double relative_bias(const std::vector<double>& estimates, double truth) {
  if (truth == 0.0) throw ValidationError("relative bias is undefined for truth = 0; use absolute bias");
  if (estimates.empty()) throw ValidationError("no estimates");
  double s = 0.0;
  for (double e : estimates) s += e;
  return (s / static_cast<double>(estimates.size()) - truth) / truth;
}

/// Population variance (divide by R).
inline double population_variance(const std::vector<double>& x) {
  if (x.empty()) throw ValidationError("no estimates");
  double m = 0.0;
  for (double v : x) m += v;
  m /= static_cast<double>(x.size());
  double s = 0.0;
  for (double v : x) s += (v - m) * (v - m);
  return s / static_cast<double>(x.size());
}

/// sqrt(variance + bias^2) with the population variance.
inline double rmse(const std::vector<double>& estimates, double truth) {
  if (estimates.empty()) throw ValidationError("no estimates");
  double m = 0.0;
  for (double v : estimates) m += v;
  m /= static_cast<double>(estimates.size());
  return std::sqrt(population_variance(estimates) + (m - truth) * (m - truth));
}

struct Interval {
  double lower = 0.0;
  double upper = 0.0;
};

/// Fraction of closed intervals containing the truth.
inline double coverage(const std::vector<Interval>& intervals, double truth) {
  if (intervals.empty()) throw ValidationError("no intervals");
  int hit = 0;
  for (const auto& iv : intervals) hit += iv.lower <= truth && truth <= iv.upper;
  return static_cast<double>(hit) / static_cast<double>(intervals.size());
}

// ---- plan -----------------------------------------------------------------

struct ReplicationPlan {
  int n_replicates = 200;
  SimConfig sim;  // seed is the master seed; rho_star / spill_fraction come from spill_grid
  PriorSpec prior;
  McmcConfig mcmc;
  std::vector<double> kappa_grid{0.0, 0.1, 0.5, 1.0};
  std::vector<double> spill_grid{0.0, 0.25, 0.5};
  int parallelism = 1;
  double alpha = 0.05;
  double max_failure_rate = 0.05;

  std::vector<std::string> violations() const {
    std::vector<std::string> v;
    if (n_replicates < 1) v.push_back("n_replicates must be >= 1");
    if (kappa_grid.empty()) v.push_back("kappa_grid must be nonempty");
    if (spill_grid.empty()) v.push_back("spill_grid must be nonempty");
    for (double k : kappa_grid)
      if (!(k >= 0.0 && k <= 1.0)) v.push_back("kappa_grid values must be in [0,1]");
    for (double s : spill_grid)
      if (!(s >= 0.0 && s <= 1.0)) v.push_back("spill_grid values must be in [0,1]");
    if (parallelism < 1) v.push_back("parallelism must be >= 1");
    if (!(alpha > 0.0 && alpha < 1.0)) v.push_back("alpha must be in (0,1)");
    if (sim.tau_true == 0.0) v.push_back("tau_true must be nonzero for relative bias");
    for (auto& s : mcmc.violations()) v.push_back(s);
    PriorSpec p = prior;
    p.kappa_d = 0.0;
    for (auto& s : p.violations()) v.push_back(s);
    return v;
  }
  void validate() const {
    auto v = violations();
    if (!v.empty()) throw ValidationError(v.front());
  }
};

/// One replicate's estimate of tau at t = T0 + 1 with its credible interval.
struct ReplicateEstimate {
  double estimate = 0.0;
  double lower = 0.0;
  double upper = 0.0;
};

struct CellMetrics {
  double kappa_d = 0.0;
  double spill_fraction = 0.0;
  double relative_bias = 0.0;
  double coverage = 0.0;
  double mean_interval_width = 0.0;
  double rmse = 0.0;
  int n_successful = 0;
  int n_failed = 0;
  // Per successful replicate, in replicate order.
  std::vector<double> estimates;
  std::vector<Interval> intervals;
  std::vector<int> replicate_index;
};

struct ReplicationResult {
  std::vector<CellMetrics> cells;  // spill-major, then kappa, in grid order
  double truth = 0.0;
};

inline std::uint64_t replicate_data_seed(std::uint64_t master, int r) {
  return derive_seed(master, 0xDA7AULL, static_cast<std::uint64_t>(r));
}
inline std::uint64_t replicate_mcmc_seed(std::uint64_t master, int r) {
  return derive_seed(master, 0x5EEDULL, static_cast<std::uint64_t>(r));
}

/// Default estimator: the full analysis pipeline, summarizing the first
/// post-period. `inspect` (optional) sees every fit.
struct PipelineEstimator {
  std::function<void(const Analysis&)> inspect;

  ReplicateEstimate operator()(const PanelData& panel, const SimTruth&, const PriorSpec& prior,
                               const McmcConfig& mcmc, double alpha) const {
    Analysis a = analyze(panel, prior, mcmc, alpha);
    if (inspect) inspect(a);
    const auto& e = a.effects.front();
    return {e.mean, e.lower, e.upper};
  }
};

inline void compute_cell_metrics(CellMetrics& cell, double truth) {
  cell.n_successful = static_cast<int>(cell.estimates.size());
  if (cell.estimates.empty()) return;
  cell.relative_bias = relative_bias(cell.estimates, truth);
  cell.rmse = rmse(cell.estimates, truth);
  cell.coverage = coverage(cell.intervals, truth);
  double w = 0.0;
  for (const auto& iv : cell.intervals) w += iv.upper - iv.lower;
  cell.mean_interval_width = w / static_cast<double>(cell.intervals.size());
}

/// Replicate r draws its panel from replicate_data_seed(master, r); the same
/// draw is reused across every kappa and spill level (only rho* changes), so
/// grid cells are compared on common random numbers. Results are stored by
/// replicate index, which makes aggregation independent of execution order.
template <typename Estimator = PipelineEstimator>
ReplicationResult run(const ReplicationPlan& plan, const Estimator& estimator = Estimator{},
                      const std::vector<int>& execution_order = {}) {
  plan.validate();
  const int R = plan.n_replicates;
  const int n_spill = static_cast<int>(plan.spill_grid.size());
  const int n_kappa = static_cast<int>(plan.kappa_grid.size());
  const int n_cells = n_spill * n_kappa;

  struct Slot {
    bool ok = false;
    ReplicateEstimate value;
  };
  std::vector<std::vector<Slot>> slots(n_cells, std::vector<Slot>(R));

  std::vector<int> order = execution_order;
  if (order.empty()) {
    order.resize(R * n_spill);
    for (int i = 0; i < R * n_spill; ++i) order[i] = i;
  }
  if (static_cast<int>(order.size()) != R * n_spill) throw ValidationError("execution order has the wrong length");

  std::atomic<std::size_t> next{0};
  std::exception_ptr fatal;
  std::atomic<bool> stop{false};
  auto worker = [&] {
    for (;;) {
      const std::size_t k = next.fetch_add(1);
      if (k >= order.size() || stop) return;
      const int unit = order[k];
      const int r = unit % R;
      const int s = unit / R;
      SimConfig sim = plan.sim;
      sim.seed = replicate_data_seed(plan.sim.seed, r);
      sim.rho_star.reset();
      sim.spill_fraction = plan.spill_grid[s];
      std::pair<PanelData, SimTruth> data;
      try {
        data = generate(sim);
      } catch (...) {
        stop = true;
        fatal = std::current_exception();
        return;
      }
      McmcConfig mcmc = plan.mcmc;
      mcmc.seed = replicate_mcmc_seed(plan.sim.seed, r);
      mcmc.parallelism = 1;
      for (int kk = 0; kk < n_kappa; ++kk) {
        PriorSpec prior = plan.prior;
        prior.kappa_d = plan.kappa_grid[kk];
        Slot& slot = slots[s * n_kappa + kk][r];
        try {
          slot.value = estimator(data.first, data.second, prior, mcmc, plan.alpha);
          slot.ok = std::isfinite(slot.value.estimate) && std::isfinite(slot.value.lower) &&
                    std::isfinite(slot.value.upper);
        } catch (const std::exception&) {
          slot.ok = false;
        }
      }
    }
  };
  const int workers = std::max(1, std::min(plan.parallelism, static_cast<int>(order.size())));
  if (workers == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (fatal) std::rethrow_exception(fatal);

  ReplicationResult result;
  result.truth = plan.sim.tau_true;
  for (int s = 0; s < n_spill; ++s)
    for (int kk = 0; kk < n_kappa; ++kk) {
      CellMetrics cell;
      cell.kappa_d = plan.kappa_grid[kk];
      cell.spill_fraction = plan.spill_grid[s];
      for (int r = 0; r < R; ++r) {
        const Slot& slot = slots[s * n_kappa + kk][r];
        if (!slot.ok) {
          ++cell.n_failed;
          continue;
        }
        cell.estimates.push_back(slot.value.estimate);
        cell.intervals.push_back({slot.value.lower, slot.value.upper});
        cell.replicate_index.push_back(r);
      }
      if (static_cast<double>(cell.n_failed) > plan.max_failure_rate * R)
        throw NumericalError("replication cell kappa_d=" + csv::format(cell.kappa_d) +
                             " spill_fraction=" + csv::format(cell.spill_fraction) + ": " +
                             std::to_string(cell.n_failed) + " of " + std::to_string(R) + " replicates failed");
      compute_cell_metrics(cell, result.truth);
      result.cells.push_back(std::move(cell));
    }
  return result;
}

}  // namespace dbsc
