#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <thread>
#include <vector>

#include <Eigen/Dense>

#include "dbsc/error.hpp"
#include "dbsc/mcmc.hpp"
#include "dbsc/panel.hpp"
#include "dbsc/rng.hpp"

namespace dbsc {

/// Imputed untreated outcomes of the treated unit, original scale.
/// Row r is retained draw r (chains concatenated in order), column k is
/// period T0 + 1 + k.
struct CounterfactualDraws {
  Eigen::MatrixXd values;
  std::uint64_t seed = 0;
  std::uint64_t config_hash = 0;
};

/// Posterior predictive path for one parameter draw, on the standardized
/// scale. The first lag is the observed Y_{T0}; later lags are the path's own
/// previous imputed values.
inline void impute_path(const ModelState& s, const PanelData& standardized, Rng& rng, Eigen::Ref<Eigen::VectorXd> out) {
  const int T0 = standardized.intervention_time;
  const double sd = std::sqrt(s.sigma2_out);
  double lag = standardized.treated_outcomes(T0 - 1);
  for (int k = 0; k < standardized.n_post(); ++k) {
    const int t = T0 + k;
    const double mean = standardized.donor_outcomes.row(t).dot(s.beta) + s.ar_coef * lag;
    lag = mean + sd * rng.normal();
    out(k) = lag;
  }
}

/// Draw r uses RNG stream derive_seed(seed, r), so the result is independent
/// of `parallelism`.
inline CounterfactualDraws impute(const PosteriorDraws& draws, const PanelData& standardized,
                                  const StandardizationRecord& record, std::uint64_t seed, int parallelism = 1) {
  if (draws.total() == 0) throw ValidationError("no posterior draws to impute from");
  if (!standardized.donor_outcomes.allFinite())
    throw ValidationError("donor outcomes after the intervention must be observed");
  const int n_post = standardized.n_post();
  if (n_post < 1) throw ValidationError("panel has no post-intervention periods");

  std::vector<const ModelState*> flat;
  for (const auto& chain : draws.chains)
    for (const auto& s : chain) flat.push_back(&s);

  CounterfactualDraws cf;
  cf.seed = seed;
  cf.config_hash = draws.config_hash;
  cf.values.resize(static_cast<Eigen::Index>(flat.size()), n_post);

  auto work = [&](std::size_t begin, std::size_t end) {
    Eigen::VectorXd path(n_post);
    for (std::size_t r = begin; r < end; ++r) {
      Rng rng(derive_seed(seed, r));
      impute_path(*flat[r], standardized, rng, path);
      for (int k = 0; k < n_post; ++k) cf.values(static_cast<Eigen::Index>(r), k) = record.to_original(path(k));
    }
  };
  const std::size_t R = flat.size();
  const std::size_t workers = std::max<std::size_t>(1, std::min<std::size_t>(parallelism, R));
  if (workers == 1) {
    work(0, R);
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work, R * w / workers, R * (w + 1) / workers);
    for (auto& t : pool) t.join();
  }
  if (!cf.values.allFinite()) throw NumericalError("non-finite imputed counterfactual");
  return cf;
}

struct EffectEstimate {
  int t = 0;  // 1-based period
  double mean = 0.0;
  double sd = 0.0;
  double lower = 0.0;
  double upper = 0.0;
  double prob_negative = 0.0;
};

/// Linear-interpolation sample quantile (R type 7) of sorted data.
inline double quantile_sorted(const std::vector<double>& sorted, double p) {
  if (sorted.empty()) throw ValidationError("quantile of empty sample");
  const double h = (static_cast<double>(sorted.size()) - 1.0) * p;
  const std::size_t lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

/// Summaries of tau draws for one period.
inline EffectEstimate summarize_effect(std::vector<double> tau, double alpha, int t) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw ValidationError("alpha must be in (0,1)");
  EffectEstimate e;
  e.t = t;
  const double n = static_cast<double>(tau.size());
  double sum = 0.0;
  int negative = 0;
  for (double v : tau) {
    sum += v;
    negative += v < 0.0;
  }
  e.mean = sum / n;
  double ss = 0.0;
  for (double v : tau) ss += (v - e.mean) * (v - e.mean);
  e.sd = tau.size() > 1 ? std::sqrt(ss / (n - 1.0)) : 0.0;
  e.prob_negative = negative / n;
  std::sort(tau.begin(), tau.end());
  e.lower = quantile_sorted(tau, alpha / 2.0);
  e.upper = quantile_sorted(tau, 1.0 - alpha / 2.0);
  return e;
}

/// tau_t = observed Y_t - imputed Y_t(0), pooled over all draws.
/// `observed` is the panel on its original scale.
inline std::vector<EffectEstimate> effects(const CounterfactualDraws& cf, const PanelData& observed, double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw ValidationError("alpha must be in (0,1)");
  const int T0 = observed.intervention_time;
  if (cf.values.cols() != observed.n_post())
    throw ValidationError("counterfactual draws do not match the number of post-periods");
  std::vector<EffectEstimate> out;
  std::vector<double> tau(static_cast<std::size_t>(cf.values.rows()));
  for (Eigen::Index k = 0; k < cf.values.cols(); ++k) {
    const double y = observed.treated_outcomes(T0 + k);
    for (Eigen::Index r = 0; r < cf.values.rows(); ++r) tau[r] = y - cf.values(r, k);
    out.push_back(summarize_effect(tau, alpha, T0 + 1 + static_cast<int>(k)));
  }
  return out;
}

}  // namespace dbsc
