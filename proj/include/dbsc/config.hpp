#pragma once

// Run configuration: one JSON file per run. Parsing is strict (unknown keys
// are violations) and collects every violation rather than stopping at the
// first one.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "dbsc/error.hpp"
#include "dbsc/mcmc.hpp"
#include "dbsc/priors.hpp"
#include "dbsc/replication.hpp"
#include "dbsc/simgen.hpp"

namespace dbsc {

class ConfigError : public ValidationError {
 public:
  explicit ConfigError(std::vector<std::string> violations)
      : ValidationError(join(violations)), violations_(std::move(violations)) {}
  const std::vector<std::string>& violations() const { return violations_; }

 private:
  static std::string join(const std::vector<std::string>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "; " : "") + v[i];
    return s;
  }
  std::vector<std::string> violations_;
};

struct DataSection {
  std::filesystem::path outcomes;
  std::filesystem::path covariates;
  int intervention_time = 0;
  std::vector<std::string> coordinate_columns;
  std::optional<double> max_distance;
  std::optional<double> spatial_scale;
};

struct OutputSection {
  double alpha = 0.05;
  bool dump_draws = false;
};

struct RunConfig {
  std::filesystem::path path;
  std::string text;  // raw file contents, hashed into outputs
  std::uint64_t hash = 0;
  std::uint64_t seed = 1;
  std::filesystem::path output_dir = "out";

  std::optional<DataSection> data;
  bool has_prior = false;
  PriorSpec prior;
  McmcConfig mcmc;
  OutputSection output;
  std::optional<SimConfig> simulation;
  std::optional<ReplicationPlan> replication;

  IngestSettings ingest() const { return {data->intervention_time, data->coordinate_columns}; }
};

namespace detail {

using nlohmann::json;

class ConfigReader {
 public:
  std::vector<std::string> violations;

  void check_keys(const json& obj, const std::string& section, std::initializer_list<const char*> allowed) {
    std::set<std::string> ok(allowed.begin(), allowed.end());
    for (auto it = obj.begin(); it != obj.end(); ++it)
      if (!ok.count(it.key())) violations.push_back("unknown key '" + qualify(section, it.key()) + "'");
  }

  std::optional<double> number(const json& obj, const std::string& section, const char* key) {
    if (!obj.contains(key) || obj[key].is_null()) return std::nullopt;
    if (!obj[key].is_number()) {
      violations.push_back("'" + qualify(section, key) + "' must be a number");
      return std::nullopt;
    }
    return obj[key].get<double>();
  }

  std::optional<long long> integer(const json& obj, const std::string& section, const char* key) {
    if (!obj.contains(key) || obj[key].is_null()) return std::nullopt;
    if (!obj[key].is_number_integer()) {
      violations.push_back("'" + qualify(section, key) + "' must be an integer");
      return std::nullopt;
    }
    return obj[key].get<long long>();
  }

  std::optional<std::uint64_t> unsigned_integer(const json& obj, const std::string& section, const char* key) {
    if (!obj.contains(key) || obj[key].is_null()) return std::nullopt;
    if (!obj[key].is_number_unsigned()) {
      violations.push_back("'" + qualify(section, key) + "' must be a non-negative integer");
      return std::nullopt;
    }
    return obj[key].get<std::uint64_t>();
  }

  std::optional<std::string> string(const json& obj, const std::string& section, const char* key) {
    if (!obj.contains(key) || obj[key].is_null()) return std::nullopt;
    if (!obj[key].is_string()) {
      violations.push_back("'" + qualify(section, key) + "' must be a string");
      return std::nullopt;
    }
    return obj[key].get<std::string>();
  }

  std::optional<bool> boolean(const json& obj, const std::string& section, const char* key) {
    if (!obj.contains(key) || obj[key].is_null()) return std::nullopt;
    if (!obj[key].is_boolean()) {
      violations.push_back("'" + qualify(section, key) + "' must be true or false");
      return std::nullopt;
    }
    return obj[key].get<bool>();
  }

  std::optional<std::vector<double>> numbers(const json& obj, const std::string& section, const char* key) {
    if (!obj.contains(key) || obj[key].is_null()) return std::nullopt;
    const json& a = obj[key];
    if (!a.is_array()) {
      violations.push_back("'" + qualify(section, key) + "' must be an array of numbers");
      return std::nullopt;
    }
    std::vector<double> out;
    for (const auto& v : a) {
      if (!v.is_number()) {
        violations.push_back("'" + qualify(section, key) + "' must be an array of numbers");
        return std::nullopt;
      }
      out.push_back(v.get<double>());
    }
    return out;
  }

  const json* section(const json& root, const char* key) {
    if (!root.contains(key) || root[key].is_null()) return nullptr;
    if (!root[key].is_object()) {
      violations.push_back("'" + std::string(key) + "' must be an object");
      return nullptr;
    }
    return &root[key];
  }

  // Adds violations from a domain object's own check, prefixed by section.
  void absorb(const std::string& section, const std::vector<std::string>& v) {
    for (const auto& s : v) violations.push_back(section + ": " + s);
  }

  static std::string qualify(const std::string& section, const std::string& key) {
    return section.empty() ? key : section + "." + key;
  }
};

inline std::pair<int, int> line_column(const std::string& text, std::size_t byte) {
  int line = 1, col = 1;
  for (std::size_t i = 0; i < byte && i < text.size(); ++i) {
    if (text[i] == '\n') {
      ++line;
      col = 1;
    } else {
      ++col;
    }
  }
  return {line, col};
}

inline void read_prior(ConfigReader& r, const json& p, PriorSpec& prior) {
  r.check_keys(p, "prior",
               {"family", "kappa_d", "rho", "exclusion_fraction", "mu_ar", "sigma_ar", "nu_var", "tau_var",
                "variance_prior_on", "distance_floor"});
  if (auto f = r.string(p, "prior", "family")) {
    if (*f == "DHS" || *f == "dhs") prior.family = PriorFamily::DHS;
    else if (*f == "DS2" || *f == "ds2") prior.family = PriorFamily::DS2;
    else r.violations.push_back("prior.family must be \"DHS\" or \"DS2\"");
  }
  if (auto v = r.number(p, "prior", "kappa_d")) prior.kappa_d = *v;
  prior.rho = r.number(p, "prior", "rho");
  prior.exclusion_fraction = r.number(p, "prior", "exclusion_fraction");
  if (auto v = r.number(p, "prior", "mu_ar")) prior.mu_ar = *v;
  if (auto v = r.number(p, "prior", "sigma_ar")) prior.sigma_ar = *v;
  if (auto v = r.number(p, "prior", "nu_var")) prior.nu_var = *v;
  if (auto v = r.number(p, "prior", "tau_var")) prior.tau_var = *v;
  if (auto v = r.number(p, "prior", "distance_floor")) prior.distance_floor = *v;
  if (auto v = r.string(p, "prior", "variance_prior_on")) {
    if (*v == "variance") prior.variance_prior_on = VariancePriorOn::Variance;
    else if (*v == "sd") prior.variance_prior_on = VariancePriorOn::StdDev;
    else r.violations.push_back("prior.variance_prior_on must be \"variance\" or \"sd\"");
  }
  if (prior.family == PriorFamily::DS2 && prior.rho && prior.exclusion_fraction)
    r.violations.push_back("prior: DS2 takes only one of 'rho' or 'exclusion_fraction'");
  if (prior.family == PriorFamily::DS2 && prior.rho && !(*prior.rho >= 0.0 && *prior.rho <= 1.0))
    r.violations.push_back("prior: rho must be in [0,1]");
}

inline void read_mcmc(ConfigReader& r, const json& m, McmcConfig& mcmc) {
  r.check_keys(m, "mcmc",
               {"n_chains", "n_iterations", "n_burnin", "thin", "slice_width", "max_slice_steps", "parallelism"});
  if (auto v = r.integer(m, "mcmc", "n_chains")) mcmc.n_chains = static_cast<int>(*v);
  if (auto v = r.integer(m, "mcmc", "n_iterations")) mcmc.n_iterations = static_cast<int>(*v);
  if (auto v = r.integer(m, "mcmc", "n_burnin")) mcmc.n_burnin = static_cast<int>(*v);
  if (auto v = r.integer(m, "mcmc", "thin")) mcmc.thin = static_cast<int>(*v);
  if (auto v = r.number(m, "mcmc", "slice_width")) mcmc.slice_width = *v;
  if (auto v = r.integer(m, "mcmc", "max_slice_steps")) mcmc.max_slice_steps = static_cast<int>(*v);
  if (auto v = r.integer(m, "mcmc", "parallelism")) mcmc.parallelism = static_cast<int>(*v);
}

inline void read_simulation(ConfigReader& r, const json& s, SimConfig& sim) {
  r.check_keys(s, "simulation",
               {"T0", "n_post", "J", "tau_true", "xi_spill", "rho_star", "spill_fraction", "mu_shift"});
  if (auto v = r.integer(s, "simulation", "T0")) sim.T0 = static_cast<int>(*v);
  if (auto v = r.integer(s, "simulation", "n_post")) sim.n_post = static_cast<int>(*v);
  if (auto v = r.integer(s, "simulation", "J")) sim.J = static_cast<int>(*v);
  if (auto v = r.number(s, "simulation", "tau_true")) sim.tau_true = *v;
  if (auto v = r.number(s, "simulation", "xi_spill")) sim.xi_spill = *v;
  sim.rho_star = r.number(s, "simulation", "rho_star");
  sim.spill_fraction = r.number(s, "simulation", "spill_fraction");
  if (auto v = r.numbers(s, "simulation", "mu_shift")) {
    if (v->size() != 2) r.violations.push_back("simulation.mu_shift must have two entries");
    else sim.mu_shift = {(*v)[0], (*v)[1]};
  }
}

}  // namespace detail

inline std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot read config '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// Parses and validates a run configuration. `command` (fit, simulate,
/// replicate, distance, summarize) adds the sections that command requires;
/// empty validates only what is present. Throws ConfigError listing every
/// violation; JSON syntax errors report line and column.
inline RunConfig validate_config(const std::filesystem::path& path, const std::string& command = "") {
  using nlohmann::json;
  RunConfig cfg;
  cfg.path = path;
  cfg.text = read_text_file(path);
  cfg.hash = fnv1a(cfg.text);

  json root;
  try {
    root = json::parse(cfg.text);
  } catch (const json::parse_error& e) {
    auto [line, col] = detail::line_column(cfg.text, e.byte > 0 ? e.byte - 1 : 0);
    throw ConfigError({path.string() + ":" + std::to_string(line) + ":" + std::to_string(col) +
                       ": JSON parse error: " + e.what()});
  }
  detail::ConfigReader r;
  if (!root.is_object()) throw ConfigError({"config root must be a JSON object"});
  r.check_keys(root, "", {"seed", "output_dir", "data", "prior", "mcmc", "output", "simulation", "replication"});

  const std::filesystem::path base = path.parent_path();
  auto resolve = [&](const std::string& p) {
    std::filesystem::path q(p);
    return q.is_absolute() ? q : base / q;
  };

  if (auto v = r.unsigned_integer(root, "", "seed")) cfg.seed = *v;
  if (auto v = r.string(root, "", "output_dir")) cfg.output_dir = resolve(*v);
  else cfg.output_dir = resolve("out");

  if (const json* d = r.section(root, "data")) {
    r.check_keys(*d, "data",
                 {"outcomes", "covariates", "intervention_time", "coordinate_columns", "max_distance",
                  "spatial_scale"});
    DataSection data;
    if (auto v = r.string(*d, "data", "outcomes")) data.outcomes = resolve(*v);
    else r.violations.push_back("data.outcomes is required");
    if (auto v = r.string(*d, "data", "covariates")) data.covariates = resolve(*v);
    else r.violations.push_back("data.covariates is required");
    if (auto v = r.integer(*d, "data", "intervention_time")) {
      data.intervention_time = static_cast<int>(*v);
      if (*v < 2) r.violations.push_back("data.intervention_time must be >= 2");
    } else {
      r.violations.push_back("data.intervention_time is required");
    }
    if (d->contains("coordinate_columns")) {
      const json& c = (*d)["coordinate_columns"];
      if (!c.is_array()) r.violations.push_back("'data.coordinate_columns' must be an array of strings");
      else
        for (const auto& s : c) {
          if (!s.is_string()) {
            r.violations.push_back("'data.coordinate_columns' must be an array of strings");
            break;
          }
          data.coordinate_columns.push_back(s.get<std::string>());
        }
    }
    data.max_distance = r.number(*d, "data", "max_distance");
    if (data.max_distance && !(*data.max_distance > 0.0)) r.violations.push_back("data.max_distance must be > 0");
    data.spatial_scale = r.number(*d, "data", "spatial_scale");
    if (data.spatial_scale && !(*data.spatial_scale > 0.0))
      r.violations.push_back("data.spatial_scale must be > 0");
    cfg.data = data;
  }

  if (const json* p = r.section(root, "prior")) {
    cfg.has_prior = true;
    detail::read_prior(r, *p, cfg.prior);
    for (const auto& v : cfg.prior.violations())
      if (v.rfind("DS2 requires", 0) == 0)
        r.violations.push_back("prior: DS2 requires either 'rho' or 'exclusion_fraction'");
      else
        r.violations.push_back("prior: " + v);
  } else {
    cfg.prior.exclusion_fraction = 0.25;
  }

  if (const json* m = r.section(root, "mcmc")) detail::read_mcmc(r, *m, cfg.mcmc);
  cfg.mcmc.seed = cfg.seed;
  r.absorb("mcmc", cfg.mcmc.violations());

  if (const json* o = r.section(root, "output")) {
    r.check_keys(*o, "output", {"alpha", "dump_draws"});
    if (auto v = r.number(*o, "output", "alpha")) cfg.output.alpha = *v;
    if (auto v = r.boolean(*o, "output", "dump_draws")) cfg.output.dump_draws = *v;
    if (!(cfg.output.alpha > 0.0 && cfg.output.alpha < 1.0)) r.violations.push_back("output.alpha must be in (0,1)");
  }

  if (const json* s = r.section(root, "simulation")) {
    SimConfig sim;
    detail::read_simulation(r, *s, sim);
    sim.seed = cfg.seed;
    cfg.simulation = sim;
  }

  if (const json* rep = r.section(root, "replication")) {
    r.check_keys(*rep, "replication", {"n_replicates", "kappa_grid", "spill_grid", "parallelism", "alpha"});
    ReplicationPlan plan;
    if (auto v = r.integer(*rep, "replication", "n_replicates")) plan.n_replicates = static_cast<int>(*v);
    if (auto v = r.numbers(*rep, "replication", "kappa_grid")) plan.kappa_grid = *v;
    if (auto v = r.numbers(*rep, "replication", "spill_grid")) plan.spill_grid = *v;
    if (auto v = r.integer(*rep, "replication", "parallelism")) plan.parallelism = static_cast<int>(*v);
    if (auto v = r.number(*rep, "replication", "alpha")) plan.alpha = *v;
    if (plan.n_replicates < 1) r.violations.push_back("replication.n_replicates must be >= 1");
    if (plan.kappa_grid.empty()) r.violations.push_back("replication.kappa_grid must be nonempty");
    if (plan.spill_grid.empty()) r.violations.push_back("replication.spill_grid must be nonempty");
    for (double k : plan.kappa_grid)
      if (!(k >= 0.0 && k <= 1.0)) r.violations.push_back("replication.kappa_grid values must be in [0,1]");
    for (double s : plan.spill_grid)
      if (!(s >= 0.0 && s <= 1.0)) r.violations.push_back("replication.spill_grid values must be in [0,1]");
    if (plan.parallelism < 1) r.violations.push_back("replication.parallelism must be >= 1");
    if (!(plan.alpha > 0.0 && plan.alpha < 1.0)) r.violations.push_back("replication.alpha must be in (0,1)");
    cfg.replication = plan;
  }

  // Command requirements.
  if (command == "fit" || command == "distance" || command == "summarize") {
    if (!cfg.data) r.violations.push_back("'data' section is required for " + command);
  }
  if (command == "simulate") {
    if (!cfg.simulation) r.violations.push_back("'simulation' section is required for simulate");
    else r.absorb("simulation", cfg.simulation->violations());
  }
  if (command == "replicate") {
    if (!cfg.replication) r.violations.push_back("'replication' section is required for replicate");
    if (cfg.simulation) {
      // The spill grid supplies rho*; ignore a spill setting given for simulate.
      SimConfig s = *cfg.simulation;
      s.rho_star.reset();
      s.spill_fraction = 0.0;
      r.absorb("simulation", s.violations());
    }
  }

  if (!r.violations.empty()) throw ConfigError(r.violations);

  if (cfg.replication) {
    auto& plan = *cfg.replication;
    plan.sim = cfg.simulation.value_or(SimConfig{});
    plan.sim.seed = cfg.seed;
    plan.prior = cfg.prior;
    plan.mcmc = cfg.mcmc;
  }
  return cfg;
}

}  // namespace dbsc
