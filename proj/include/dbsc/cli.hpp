#pragma once

// Command-line front end. Exit codes: 0 success, 1 validation error,
// 2 numerical failure. Errors go to stderr prefixed with "ERROR:".

#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "dbsc/config.hpp"
#include "dbsc/diagnostics.hpp"
#include "dbsc/io.hpp"
#include "dbsc/pipeline.hpp"
#include "dbsc/replication.hpp"
#include "dbsc/simgen.hpp"

#ifndef DBSC_VERSION
#define DBSC_VERSION "0.0.0"
#endif

namespace dbsc::cli {

namespace fs = std::filesystem;
using nlohmann::json;

inline constexpr int kExitOk = 0;
inline constexpr int kExitValidation = 1;
inline constexpr int kExitNumerical = 2;

inline std::string hex(std::uint64_t v) {
  std::ostringstream ss;
  ss << std::hex << std::setw(16) << std::setfill('0') << v;
  return ss.str();
}

inline std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

inline json provenance(const RunConfig& cfg, const std::string& command) {
  return {{"command", command},
          {"version", DBSC_VERSION},
          {"config", cfg.path.filename().string()},
          {"config_hash", hex(cfg.hash)},
          {"seed", cfg.seed},
          {"timestamp", utc_timestamp()}};
}

class OutputDir {
 public:
  explicit OutputDir(fs::path dir) : dir_(std::move(dir)) { fs::create_directories(dir_); }
  fs::path operator/(const std::string& name) const { return dir_ / name; }

  std::ofstream open(const std::string& name) const {
    std::ofstream out(dir_ / name, std::ios::binary);
    if (!out) throw ValidationError("cannot write '" + (dir_ / name).string() + "'");
    return out;
  }
  void write_json(const std::string& name, const json& j) const { open(name) << j.dump(2) << '\n'; }

 private:
  fs::path dir_;
};

inline PanelData load_observed(const RunConfig& cfg) {
  PanelData panel = load_panel(cfg.data->outcomes.string(), cfg.data->covariates.string(), cfg.ingest());
  if (cfg.data->max_distance) panel = trim_donors(panel, *cfg.data->max_distance);
  return panel;
}

inline std::vector<std::string> donor_labels(const PanelData& panel) {
  return {panel.unit_labels.begin() + 1, panel.unit_labels.end()};
}

inline json prior_json(const PriorSpec& p, const std::optional<Cutoff>& cutoff) {
  json j = {{"family", to_string(p.family)},
            {"kappa_d", p.kappa_d},
            {"mu_ar", p.mu_ar},
            {"sigma_ar", p.sigma_ar},
            {"nu_var", p.nu_var},
            {"tau_var", p.tau_var},
            {"variance_prior_on", p.variance_prior_on == VariancePriorOn::Variance ? "variance" : "sd"},
            {"distance_floor", p.distance_floor}};
  if (p.rho) j["rho"] = *p.rho;
  if (p.exclusion_fraction) j["exclusion_fraction"] = *p.exclusion_fraction;
  if (cutoff) j["n_excluded"] = cutoff->n_excluded;
  return j;
}

inline void warn_ties(const std::optional<Cutoff>& c, std::ostream& err) {
  if (c && c->ties_expanded)
    err << "WARNING: ties at the cutoff exclude " << c->n_excluded << " donors (target " << c->n_target
              << ")\n";
}

inline void write_effects(const OutputDir& out, const RunConfig& cfg, const std::string& command,
                          const std::vector<EffectEstimate>& effects, json extra = json::object()) {
  {
    auto f = out.open("effects.csv");
    io::write_effects_csv(f, effects);
  }
  json j = io::effects_json(effects, cfg.output.alpha);
  for (auto& [k, v] : extra.items()) j[k] = v;
  j["provenance"] = provenance(cfg, command);
  out.write_json("effects.json", j);
}

inline int cmd_fit(const RunConfig& cfg, std::ostream& err) {
  const PanelData panel = load_observed(cfg);
  const Analysis a = analyze(panel, cfg.prior, cfg.mcmc, cfg.output.alpha, cfg.data->spatial_scale);
  warn_ties(a.cutoff, err);
  const OutputDir out(cfg.output_dir);
  write_effects(out, cfg, "fit", a.effects,
                {{"prior", prior_json(a.prior, a.cutoff)},
                 {"n_draws", a.draws.total()},
                 {"sampler_config_hash", hex(a.draws.config_hash)}});
  const auto labels = donor_labels(panel);
  if (a.draws.total() >= 4 && a.draws.per_chain() >= 4) out.write_json("diagnostics.json", io::diagnostics_json(diagnostics(a.draws, labels)));
  if (cfg.output.dump_draws) {
    auto f = out.open("draws.csv");
    io::write_draws_csv(f, a.draws, labels);
  }
  return kExitOk;
}

inline int cmd_simulate(const RunConfig& cfg) {
  auto [panel, truth] = generate(*cfg.simulation);
  const OutputDir out(cfg.output_dir);
  {
    auto fo = out.open("outcomes.csv");
    auto fc = out.open("covariates.csv");
    write_panel(panel, fo, fc);
  }
  json affected = json::array();
  for (int j = 0; j < panel.n_donors(); ++j)
    if (truth.affected[j]) affected.push_back(panel.unit_labels[j + 1]);
  json y0 = json::object();
  for (int i = 0; i < panel.n_units(); ++i) {
    std::vector<double> col(truth.untreated_outcomes.rows());
    for (Eigen::Index t = 0; t < truth.untreated_outcomes.rows(); ++t) col[t] = truth.untreated_outcomes(t, i);
    y0[panel.unit_labels[i]] = col;
  }
  out.write_json("truth.json", {{"T0", truth.T0},
                                {"tau_true", truth.tau_true},
                                {"xi_spill", truth.xi_spill},
                                {"rho_star", truth.rho_star},
                                {"affected_donors", affected},
                                {"untreated_outcomes", y0},
                                {"provenance", provenance(cfg, "simulate")}});
  return kExitOk;
}

inline int cmd_replicate(const RunConfig& cfg) {
  const ReplicationPlan& plan = *cfg.replication;
  const ReplicationResult result = run(plan);
  const OutputDir out(cfg.output_dir);
  {
    auto f = out.open("metrics.csv");
    io::write_metrics_csv(f, result);
  }
  {
    auto f = out.open("estimates.csv");
    io::write_estimates_csv(f, result);
  }
  json cells = json::array();
  for (const auto& c : result.cells)
    cells.push_back({{"kappa_d", c.kappa_d},
                     {"spill_fraction", c.spill_fraction},
                     {"relative_bias", c.relative_bias},
                     {"coverage", c.coverage},
                     {"mean_interval_width", c.mean_interval_width},
                     {"rmse", c.rmse},
                     {"n_successful", c.n_successful},
                     {"n_failed", c.n_failed}});
  json plan_json = {{"n_replicates", plan.n_replicates},
                    {"kappa_grid", plan.kappa_grid},
                    {"spill_grid", plan.spill_grid},
                    {"alpha", plan.alpha},
                    {"prior", prior_json(plan.prior, std::nullopt)},
                    {"mcmc", {{"n_chains", plan.mcmc.n_chains},
                              {"n_iterations", plan.mcmc.n_iterations},
                              {"n_burnin", plan.mcmc.burnin()},
                              {"thin", plan.mcmc.thin}}},
                    {"simulation", {{"T0", plan.sim.T0},
                                    {"n_post", plan.sim.n_post},
                                    {"J", plan.sim.J},
                                    {"tau_true", plan.sim.tau_true},
                                    {"xi_spill", plan.sim.xi_spill},
                                    {"mu_shift", plan.sim.mu_shift}}}};
  out.write_json("metrics.json", {{"truth", result.truth},
                                  {"cells", cells},
                                  {"plan", plan_json},
                                  {"provenance", provenance(cfg, "replicate")}});
  return kExitOk;
}

inline int cmd_distance(const RunConfig& cfg, std::ostream& err) {
  const PanelData panel = load_observed(cfg);
  const auto [standardized, record] = standardize(panel);
  const WeightedDistances w =
      compute_distances(standardized.covariates, standardized.coordinates, cfg.prior.kappa_d, cfg.data->spatial_scale);
  PriorSpec prior = cfg.prior;
  std::vector<std::uint8_t> omega;
  if (prior.family == PriorFamily::DS2) {
    warn_ties(resolve_cutoff(prior, w), err);
    omega = assign_components(w, *prior.rho);
  }
  const OutputDir out(cfg.output_dir);
  auto f = out.open("distances.csv");
  io::write_distances_csv(f, w, donor_labels(panel), omega);
  return kExitOk;
}

inline int cmd_summarize(const RunConfig& cfg, const fs::path& draws_path) {
  const PanelData panel = load_observed(cfg);
  const auto [standardized, record] = standardize(panel);
  const PosteriorDraws draws = io::read_draws_csv(draws_path.string(), donor_labels(panel));
  const CounterfactualDraws cf =
      impute(draws, standardized, record, imputation_seed(cfg.mcmc.seed), cfg.mcmc.parallelism);
  const auto eff = effects(cf, panel, cfg.output.alpha);
  write_effects(OutputDir(cfg.output_dir), cfg, "summarize", eff, {{"n_draws", draws.total()}});
  return kExitOk;
}

/// Entry point shared by the dbsc executable and the tests.
inline int run(int argc, const char* const* argv, std::ostream& err = std::cerr) {
  CLI::App app{"Bayesian synthetic control with distance-based shrinkage priors", "dbsc"};
  app.set_version_flag("--version", std::string("dbsc ") + DBSC_VERSION);
  app.require_subcommand(1);

  std::string config_path, draws_path, out_override;
  std::optional<std::uint64_t> seed_override;
  std::string command;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("-c,--config", config_path, "JSON run configuration")->required();
    sub->add_option("--seed", seed_override, "override the configuration seed");
    sub->add_option("--out", out_override, "override the output directory");
  };
  for (const char* name : {"fit", "simulate", "replicate", "distance", "summarize", "validate"}) {
    const char* help = "";
    const std::string n = name;
    if (n == "fit") help = "fit a panel and write effects, diagnostics and optional draws";
    if (n == "simulate") help = "generate a synthetic panel and its truth manifest";
    if (n == "replicate") help = "run the simulation study and write the metrics table";
    if (n == "distance") help = "write the per-donor distance audit";
    if (n == "summarize") help = "recompute effect summaries from a draw dump";
    if (n == "validate") help = "check a configuration and report every violation";
    auto* sub = app.add_subcommand(name, help);
    add_common(sub);
    if (n == "summarize") sub->add_option("--draws", draws_path, "draw dump CSV")->required();
    sub->callback([&command, n] { command = n; });
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    err << "ERROR: " << e.what() << '\n';
    return kExitValidation;
  }

  try {
    RunConfig cfg = validate_config(config_path, command == "validate" ? "" : command);
    if (seed_override) {
      cfg.seed = *seed_override;
      cfg.mcmc.seed = *seed_override;
      if (cfg.simulation) cfg.simulation->seed = *seed_override;
      if (cfg.replication) cfg.replication->sim.seed = *seed_override;
    }
    if (!out_override.empty()) cfg.output_dir = out_override;

    if (command == "fit") return cmd_fit(cfg, err);
    if (command == "simulate") return cmd_simulate(cfg);
    if (command == "replicate") return cmd_replicate(cfg);
    if (command == "distance") return cmd_distance(cfg, err);
    if (command == "summarize") return cmd_summarize(cfg, draws_path);
    return kExitOk;  // validate
  } catch (const ConfigError& e) {
    for (const auto& v : e.violations()) err << "ERROR: " << v << '\n';
    return kExitValidation;
  } catch (const ValidationError& e) {
    err << "ERROR: " << e.what() << '\n';
    return kExitValidation;
  } catch (const fs::filesystem_error& e) {
    err << "ERROR: " << e.what() << '\n';
    return kExitValidation;
  } catch (const NumericalError& e) {
    err << "ERROR: " << e.what() << '\n';
    return kExitNumerical;
  } catch (const std::exception& e) {
    err << "ERROR: " << e.what() << '\n';
    return kExitNumerical;
  }
}

}  // namespace dbsc::cli
