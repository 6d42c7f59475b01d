#pragma once

// File formats: effects, diagnostics, draw dumps, distance audit and
// replication metrics.

#include <map>
#include <ostream>
#include <string>
#include <vector>

#include "json.hpp"

#include "dbsc/counterfactual.hpp"
#include "dbsc/csv.hpp"
#include "dbsc/diagnostics.hpp"
#include "dbsc/distance.hpp"
#include "dbsc/mcmc.hpp"
#include "dbsc/replication.hpp"

namespace dbsc::io {

using nlohmann::json;

inline void write_effects_csv(std::ostream& out, const std::vector<EffectEstimate>& effects) {
  out << "t,mean,sd,lower,upper,prob_negative\n";
  for (const auto& e : effects)
    csv::write_row(out, {std::to_string(e.t), csv::format(e.mean), csv::format(e.sd), csv::format(e.lower),
                         csv::format(e.upper), csv::format(e.prob_negative)});
}

inline json effects_json(const std::vector<EffectEstimate>& effects, double alpha) {
  json rows = json::array();
  for (const auto& e : effects)
    rows.push_back({{"t", e.t},
                    {"mean", e.mean},
                    {"sd", e.sd},
                    {"lower", e.lower},
                    {"upper", e.upper},
                    {"prob_negative", e.prob_negative}});
  return {{"alpha", alpha}, {"effects", rows}};
}

inline std::vector<EffectEstimate> read_effects_csv(const std::string& path) {
  const auto t = csv::read(path);
  std::vector<EffectEstimate> out;
  for (const auto& row : t.rows) {
    EffectEstimate e;
    long long tt = 0;
    csv::parse_int(row[t.column("t")], tt);
    e.t = static_cast<int>(tt);
    csv::parse_double(row[t.column("mean")], e.mean);
    csv::parse_double(row[t.column("sd")], e.sd);
    csv::parse_double(row[t.column("lower")], e.lower);
    csv::parse_double(row[t.column("upper")], e.upper);
    csv::parse_double(row[t.column("prob_negative")], e.prob_negative);
    out.push_back(e);
  }
  return out;
}

inline json diagnostics_json(const Diagnostics& d) {
  json params = json::array();
  for (const auto& p : d.parameters) {
    // JSON has no infinity; an unbounded Rhat is reported as null.
    json rhat = std::isfinite(p.rhat) ? json(p.rhat) : json(nullptr);
    params.push_back({{"name", p.name}, {"rhat", rhat}, {"ess_bulk", p.ess_bulk}});
  }
  return {{"parameters", params},
          {"max_rhat", std::isfinite(d.max_rhat()) ? json(d.max_rhat()) : json(nullptr)},
          {"min_ess_bulk", d.min_ess()},
          {"mean_slice_evaluations", d.mean_slice_evaluations},
          {"max_shrink_steps", d.max_shrink_steps}};
}

/// Draw dump: chain,iteration,parameter,value (retained draws only).
inline void write_draws_csv(std::ostream& out, const PosteriorDraws& draws,
                            const std::vector<std::string>& donor_labels) {
  out << "chain,iteration,parameter,value\n";
  const char* scale_name = draws.family == PriorFamily::DHS ? "zeta2" : "nu2_slab";
  for (int c = 0; c < draws.n_chains(); ++c)
    for (std::size_t k = 0; k < draws.chains[c].size(); ++k) {
      const ModelState& s = draws.chains[c][k];
      const std::string chain = std::to_string(c);
      const std::string it = std::to_string(draws.iterations[k]);
      for (Eigen::Index i = 0; i < s.beta.size(); ++i)
        csv::write_row(out, {chain, it, "beta." + donor_labels[i], csv::format(s.beta(i))});
      csv::write_row(out, {chain, it, "ar_coef", csv::format(s.ar_coef)});
      csv::write_row(out, {chain, it, "sigma2_out", csv::format(s.sigma2_out)});
      csv::write_row(out, {chain, it, scale_name, csv::format(draws.family == PriorFamily::DHS ? s.zeta2 : s.nu2_slab)});
    }
}

/// Rebuilds draws (beta, ar_coef, sigma2_out and the global scale) from a
/// dump. Donor labels must match the dump's beta.<label> parameters.
inline PosteriorDraws read_draws_csv(const std::string& path, const std::vector<std::string>& donor_labels) {
  const auto t = csv::read(path);
  const std::size_t c_chain = t.column("chain"), c_it = t.column("iteration"), c_par = t.column("parameter"),
                    c_val = t.column("value");
  std::map<std::string, int> label_index;
  for (std::size_t i = 0; i < donor_labels.size(); ++i) label_index["beta." + donor_labels[i]] = static_cast<int>(i);
  const int J = static_cast<int>(donor_labels.size());

  // (chain, iteration) -> state, kept in file order.
  std::map<std::pair<long long, long long>, ModelState> states;
  std::vector<long long> iteration_order;
  bool has_zeta = false;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const auto& row = t.rows[r];
    long long chain = 0, it = 0;
    double v = 0.0;
    if (!csv::parse_int(row[c_chain], chain) || !csv::parse_int(row[c_it], it) || !csv::parse_double(row[c_val], v))
      throw ValidationError(path + ":" + std::to_string(t.line_numbers[r]) + ": malformed draw row");
    auto [pos, inserted] = states.try_emplace({chain, it});
    ModelState& s = pos->second;
    if (inserted) {
      s.beta = Eigen::VectorXd::Zero(J);
      s.omega.assign(J, 1);
    }
    const std::string& name = row[c_par];
    if (auto li = label_index.find(name); li != label_index.end()) s.beta(li->second) = v;
    else if (name == "ar_coef") s.ar_coef = v;
    else if (name == "sigma2_out") s.sigma2_out = v;
    else if (name == "zeta2") s.zeta2 = v, has_zeta = true;
    else if (name == "nu2_slab") s.nu2_slab = v;
    else if (name.rfind("beta.", 0) == 0)
      throw ValidationError(path + ": draw for unknown donor '" + name.substr(5) + "'");
    else
      throw ValidationError(path + ": unknown parameter '" + name + "'");
  }
  if (states.empty()) throw ValidationError(path + ": no draws");

  PosteriorDraws draws;
  draws.family = has_zeta ? PriorFamily::DHS : PriorFamily::DS2;
  std::map<long long, std::vector<std::pair<long long, ModelState>>> by_chain;
  for (auto& [key, s] : states) by_chain[key.first].emplace_back(key.second, std::move(s));
  for (auto& [chain, list] : by_chain) {
    std::vector<ModelState> chain_states;
    std::vector<int> its;
    for (auto& [it, s] : list) {
      its.push_back(static_cast<int>(it));
      chain_states.push_back(std::move(s));
    }
    if (draws.chains.empty()) draws.iterations = its;
    else if (chain_states.size() != draws.chains.front().size())
      throw ValidationError(path + ": chains have different numbers of draws");
    draws.chains.push_back(std::move(chain_states));
  }
  // A donor whose beta is identically zero in every draw is treated as spiked.
  draws.omega.assign(J, 0);
  for (const auto& chain : draws.chains)
    for (const auto& s : chain)
      for (int i = 0; i < J; ++i)
        if (s.beta(i) != 0.0) draws.omega[i] = 1;
  return draws;
}

inline void write_distances_csv(std::ostream& out, const WeightedDistances& w, const std::vector<std::string>& donor_labels,
                                const std::vector<std::uint8_t>& omega) {
  out << "unit_id,d_x,d_p,d_c,excluded\n";
  for (int i = 0; i < w.size(); ++i)
    csv::write_row(out, {donor_labels[i], csv::format(w.d_x(i)), csv::format(w.d_p(i)), csv::format(w.d_c(i)),
                         omega.empty() ? "0" : (omega[i] ? "0" : "1")});
}

inline void write_metrics_csv(std::ostream& out, const ReplicationResult& result) {
  out << "kappa_d,spill_fraction,metric,value,n_replicates\n";
  for (const auto& c : result.cells) {
    const std::string k = csv::format(c.kappa_d), s = csv::format(c.spill_fraction), n = std::to_string(c.n_successful);
    csv::write_row(out, {k, s, "relative_bias", csv::format(c.relative_bias), n});
    csv::write_row(out, {k, s, "coverage", csv::format(c.coverage), n});
    csv::write_row(out, {k, s, "mean_interval_width", csv::format(c.mean_interval_width), n});
    csv::write_row(out, {k, s, "rmse", csv::format(c.rmse), n});
  }
}

/// Raw per-replicate estimates behind the metrics.
inline void write_estimates_csv(std::ostream& out, const ReplicationResult& result) {
  out << "kappa_d,spill_fraction,replicate,estimate,lower,upper\n";
  for (const auto& c : result.cells)
    for (std::size_t i = 0; i < c.estimates.size(); ++i)
      csv::write_row(out, {csv::format(c.kappa_d), csv::format(c.spill_fraction), std::to_string(c.replicate_index[i]),
                           csv::format(c.estimates[i]), csv::format(c.intervals[i].lower),
                           csv::format(c.intervals[i].upper)});
}

}  // namespace dbsc::io
