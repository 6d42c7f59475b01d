#pragma once

// Rank-normalized split-Rhat and bulk effective sample size, following the
// multi-chain estimators used by Stan.

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include <boost/math/distributions/normal.hpp>

#include "dbsc/error.hpp"
#include "dbsc/mcmc.hpp"

namespace dbsc {

using ChainSeries = std::vector<std::vector<double>>;  // [chain][draw]

namespace detail {

inline ChainSeries split_chains(const ChainSeries& chains) {
  ChainSeries out;
  for (const auto& c : chains) {
    const std::size_t half = c.size() / 2;
    out.emplace_back(c.begin(), c.begin() + half);
    out.emplace_back(c.end() - half, c.end());
  }
  return out;
}

inline ChainSeries rank_normalize(const ChainSeries& chains) {
  std::vector<std::pair<double, std::size_t>> all;
  for (std::size_t c = 0; c < chains.size(); ++c)
    for (std::size_t i = 0; i < chains[c].size(); ++i) all.emplace_back(chains[c][i], all.size());
  const std::size_t S = all.size();
  std::vector<double> ranks(S);
  std::sort(all.begin(), all.end());
  for (std::size_t i = 0; i < S;) {
    std::size_t j = i;
    while (j + 1 < S && all[j + 1].first == all[i].first) ++j;
    const double avg = 0.5 * static_cast<double>(i + j) + 1.0;  // 1-based average rank
    for (std::size_t k = i; k <= j; ++k) ranks[all[k].second] = avg;
    i = j + 1;
  }
  const boost::math::normal standard;
  ChainSeries out = chains;
  std::size_t idx = 0;
  for (auto& c : out)
    for (auto& v : c) v = boost::math::quantile(standard, (ranks[idx++] - 0.375) / (static_cast<double>(S) + 0.25));
  return out;
}

inline double mean_of(const std::vector<double>& v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

inline double var_of(const std::vector<double>& v) {
  const double m = mean_of(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return s / static_cast<double>(v.size() - 1);
}

inline bool all_equal(const ChainSeries& chains) {
  const double first = chains.front().front();
  for (const auto& c : chains)
    for (double v : c)
      if (v != first) return false;
  return true;
}

// Classic potential scale reduction on already-split chains of equal length.
inline double rhat_of(const ChainSeries& chains) {
  const double n = static_cast<double>(chains.front().size());
  std::vector<double> means, vars;
  for (const auto& c : chains) {
    means.push_back(mean_of(c));
    vars.push_back(var_of(c));
  }
  const double W = mean_of(vars);
  const double B = n * var_of(means);
  if (W <= 0.0) return B > 0.0 ? std::numeric_limits<double>::infinity() : 1.0;
  return std::sqrt(((n - 1.0) / n * W + B / n) / W);
}

inline double ess_of(const ChainSeries& chains) {
  const std::size_t M = chains.size();
  const std::size_t n = chains.front().size();
  std::vector<double> means(M), vars(M);
  for (std::size_t m = 0; m < M; ++m) {
    means[m] = mean_of(chains[m]);
    vars[m] = var_of(chains[m]);
  }
  const double mean_var = mean_of(vars);
  double var_plus = mean_var * (static_cast<double>(n) - 1.0) / static_cast<double>(n);
  if (M > 1) var_plus += var_of(means);
  const double total = static_cast<double>(M * n);
  if (!(var_plus > 0.0)) return total;
  if (!(mean_var > 0.0)) return 1.0;

  auto autocov_mean = [&](std::size_t lag) {
    double acc = 0.0;
    for (std::size_t m = 0; m < M; ++m) {
      double s = 0.0;
      for (std::size_t i = 0; i + lag < n; ++i) s += (chains[m][i] - means[m]) * (chains[m][i + lag] - means[m]);
      acc += s / static_cast<double>(n);
    }
    return acc / static_cast<double>(M);
  };
  // Variance estimate matching var_of (n - 1 denominator) at lag 0.
  auto rho = [&](std::size_t lag) {
    if (lag == 0) return 1.0;
    const double acov = autocov_mean(lag);
    return 1.0 - (mean_var - acov * static_cast<double>(n) / (static_cast<double>(n) - 1.0)) / var_plus;
  };

  // Geyer's initial positive, monotone sequence.
  double sum_pairs = 0.0;
  double prev_pair = std::numeric_limits<double>::infinity();
  for (std::size_t t = 0; t + 1 < n; t += 2) {
    double pair = rho(t) + rho(t + 1);
    if (pair <= 0.0) break;
    pair = std::min(pair, prev_pair);
    sum_pairs += pair;
    prev_pair = pair;
  }
  double tau = -1.0 + 2.0 * sum_pairs;
  tau = std::max(tau, 1.0 / std::log10(total));
  return std::min(total / tau, total);
}

inline void check_series(const ChainSeries& chains) {
  std::size_t total = 0;
  for (const auto& c : chains) total += c.size();
  if (chains.empty() || total < 4) throw ValidationError("diagnostics need at least 4 retained draws");
  for (const auto& c : chains)
    if (c.size() != chains.front().size()) throw ValidationError("chains must have equal length");
  if (chains.front().size() < 4) throw ValidationError("diagnostics need at least 4 retained draws per chain");
}

}  // namespace detail

/// Rank-normalized split-Rhat.
inline double split_rhat(const ChainSeries& chains) {
  detail::check_series(chains);
  if (detail::all_equal(chains)) return 1.0;
  return detail::rhat_of(detail::rank_normalize(detail::split_chains(chains)));
}

/// Bulk effective sample size (rank-normalized, split chains), capped at the
/// number of draws.
inline double ess_bulk(const ChainSeries& chains) {
  detail::check_series(chains);
  auto split = detail::split_chains(chains);
  const double total = static_cast<double>(split.size() * split.front().size());
  if (detail::all_equal(chains)) return total;
  return detail::ess_of(detail::rank_normalize(split));
}

struct ParameterDiagnostic {
  std::string name;
  double rhat = 1.0;
  double ess_bulk = 0.0;
};

struct Diagnostics {
  std::vector<ParameterDiagnostic> parameters;
  double mean_slice_evaluations = 0.0;  // per iteration, averaged over chains
  int max_shrink_steps = 0;

  double max_rhat() const {
    double r = 1.0;
    for (const auto& p : parameters) r = std::max(r, p.rhat);
    return r;
  }
  double min_ess() const {
    double e = std::numeric_limits<double>::infinity();
    for (const auto& p : parameters) e = std::min(e, p.ess_bulk);
    return e;
  }
};

/// Extracts one scalar parameter across chains.
template <typename Getter>
ChainSeries extract(const PosteriorDraws& draws, Getter get) {
  ChainSeries out(draws.chains.size());
  for (std::size_t c = 0; c < draws.chains.size(); ++c)
    for (const auto& s : draws.chains[c]) out[c].push_back(get(s));
  return out;
}

/// Named scalar parameters of a draw set: beta.<label>, ar_coef, sigma2_out,
/// then zeta2 (DHS) or nu2_slab (DS2).
inline std::vector<std::pair<std::string, ChainSeries>> scalar_parameters(const PosteriorDraws& draws,
                                                                          const std::vector<std::string>& donor_labels) {
  std::vector<std::pair<std::string, ChainSeries>> out;
  if (draws.chains.empty() || draws.chains.front().empty()) return out;
  const int J = static_cast<int>(draws.chains.front().front().beta.size());
  for (int i = 0; i < J; ++i) {
    const std::string label = i < static_cast<int>(donor_labels.size()) ? donor_labels[i] : std::to_string(i);
    out.emplace_back("beta." + label, extract(draws, [i](const ModelState& s) { return s.beta(i); }));
  }
  out.emplace_back("ar_coef", extract(draws, [](const ModelState& s) { return s.ar_coef; }));
  out.emplace_back("sigma2_out", extract(draws, [](const ModelState& s) { return s.sigma2_out; }));
  if (draws.family == PriorFamily::DHS)
    out.emplace_back("zeta2", extract(draws, [](const ModelState& s) { return s.zeta2; }));
  else
    out.emplace_back("nu2_slab", extract(draws, [](const ModelState& s) { return s.nu2_slab; }));
  return out;
}

inline Diagnostics diagnostics(const PosteriorDraws& draws, const std::vector<std::string>& donor_labels = {}) {
  if (draws.total() < 4) throw ValidationError("diagnostics need at least 4 retained draws");
  Diagnostics d;
  for (auto& [name, series] : scalar_parameters(draws, donor_labels))
    d.parameters.push_back({name, split_rhat(series), ess_bulk(series)});
  if (!draws.stats.empty() && !draws.iterations.empty()) {
    // Evaluations are counted over all iterations, including burn-in.
    const double iters = static_cast<double>(draws.iterations.back() + 1);
    for (const auto& s : draws.stats) {
      d.mean_slice_evaluations += static_cast<double>(s.slice_evaluations) / iters;
      d.max_shrink_steps = std::max(d.max_shrink_steps, s.max_shrink_steps);
    }
    d.mean_slice_evaluations /= static_cast<double>(draws.stats.size());
  }
  return d;
}

}  // namespace dbsc
