#pragma once

#include <cmath>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "dbsc/distance.hpp"
#include "dbsc/error.hpp"
#include "dbsc/panel.hpp"

namespace dbsc {

enum class PriorFamily { DHS, DS2 };

// Which quantity carries the half-t prior: the outcome variance itself, or
// its square root.
enum class VariancePriorOn { Variance, StdDev };

inline const char* to_string(PriorFamily f) { return f == PriorFamily::DHS ? "DHS" : "DS2"; }

struct PriorSpec {
  PriorFamily family = PriorFamily::DS2;
  double kappa_d = 0.0;
  // DS2 cutoff. Either given directly or derived from exclusion_fraction.
  std::optional<double> rho;
  std::optional<double> exclusion_fraction;
  double mu_ar = 0.0;
  double sigma_ar = 3.0;
  double nu_var = 4.0;
  double tau_var = 1.0;
  VariancePriorOn variance_prior_on = VariancePriorOn::Variance;
  double distance_floor = 1e-6;

  // Violations, empty when valid. When both rho and exclusion_fraction are
  // present, rho was derived from the fraction and takes precedence.
  std::vector<std::string> violations() const {
    std::vector<std::string> v;
    if (!(kappa_d >= 0.0 && kappa_d <= 1.0)) v.push_back("kappa_d must be in [0,1]");
    if (!(sigma_ar > 0.0)) v.push_back("sigma_ar must be > 0");
    if (!(nu_var > 0.0)) v.push_back("nu_var must be > 0");
    if (!(tau_var > 0.0)) v.push_back("tau_var must be > 0");
    if (!(distance_floor > 0.0)) v.push_back("distance_floor must be > 0");
    if (!std::isfinite(mu_ar)) v.push_back("mu_ar must be finite");
    if (family == PriorFamily::DS2) {
      if (!rho && !exclusion_fraction) v.push_back("DS2 requires either 'rho' or 'exclusion_fraction'");
      if (exclusion_fraction && !(*exclusion_fraction >= 0.0 && *exclusion_fraction < 1.0))
        v.push_back("exclusion_fraction must be in [0,1)");
      // A derived rho may sit just below the smallest distance.
      if (rho && !(*rho <= 1.0 && (exclusion_fraction || *rho >= 0.0))) v.push_back("rho must be in [0,1]");
    }
    return v;
  }

  void validate() const {
    auto v = violations();
    if (!v.empty()) throw ValidationError(v.front());
  }
};

/// One state of the sampler. For DS2 `lambda2`, `zeta2` and `aux_lambda` are
/// unused; for DHS `nu2_slab`, `aux_nu` and `omega` are unused (omega all 1).
struct ModelState {
  Eigen::VectorXd beta;
  double ar_coef = 0.0;
  double sigma2_out = 1.0;
  Eigen::VectorXd lambda2;
  double zeta2 = 1.0;
  double nu2_slab = 1.0;
  std::vector<std::uint8_t> omega;
  Eigen::VectorXd aux_lambda;
  double aux_zeta = 1.0;
  double aux_nu = 1.0;
};

/// omega_i = 1 iff d_c[i] > rho.
inline std::vector<std::uint8_t> assign_components(const WeightedDistances& distances, double rho) {
  std::vector<std::uint8_t> omega(distances.size());
  for (int i = 0; i < distances.size(); ++i) omega[i] = distances.d_c(i) > rho ? 1 : 0;
  return omega;
}

// ---- scalar log densities ------------------------------------------------

inline double log_normal_pdf(double x, double mean, double variance) {
  const double r = x - mean;
  return -0.5 * std::log(2.0 * std::numbers::pi * variance) - 0.5 * r * r / variance;
}

/// Half-Cauchy C+(0, scale) on x > 0.
inline double log_half_cauchy(double x, double scale) {
  if (!(x > 0.0)) return -std::numeric_limits<double>::infinity();
  const double z = x / scale;
  return std::log(2.0 / (std::numbers::pi * scale)) - std::log1p(z * z);
}

/// Half Student-t with `nu` degrees of freedom and scale `scale` on x > 0.
inline double log_half_t(double x, double nu, double scale) {
  if (!(x > 0.0)) return -std::numeric_limits<double>::infinity();
  const double z = x / scale;
  return std::log(2.0) + std::lgamma(0.5 * (nu + 1.0)) - std::lgamma(0.5 * nu) -
         0.5 * std::log(nu * std::numbers::pi) - std::log(scale) - 0.5 * (nu + 1.0) * std::log1p(z * z / nu);
}

/// Log prior density of the outcome variance under either reading of the
/// half-t placement.
inline double log_variance_prior(double sigma2, const PriorSpec& spec) {
  if (spec.variance_prior_on == VariancePriorOn::Variance) return log_half_t(sigma2, spec.nu_var, spec.tau_var);
  if (!(sigma2 > 0.0)) return -std::numeric_limits<double>::infinity();
  const double sd = std::sqrt(sigma2);
  return log_half_t(sd, spec.nu_var, spec.tau_var) - std::log(2.0 * sd);
}

/// Floored weighted distances used as half-Cauchy scales.
inline Eigen::VectorXd local_scales(const WeightedDistances& distances, double floor) {
  return distances.d_c.cwiseMax(floor);
}

// ---- model densities -----------------------------------------------------

/// Sum over t = 2..T0 of log N(Y_t; V_t'beta + ar * Y_{t-1}, sigma2_out).
inline double log_likelihood(const ModelState& state, const PanelData& panel) {
  const int T0 = panel.intervention_time;
  if (state.beta.size() != panel.n_donors()) throw ValidationError("beta length does not match donor count");
  double ll = 0.0;
  for (int t = 1; t < T0; ++t) {
    const double mean = panel.donor_outcomes.row(t).dot(state.beta) + state.ar_coef * panel.treated_outcomes(t - 1);
    ll += log_normal_pdf(panel.treated_outcomes(t), mean, state.sigma2_out);
  }
  if (!std::isfinite(ll)) throw NumericalError("log-likelihood is not finite");
  return ll;
}

inline double log_prior(const ModelState& state, const PriorSpec& spec, const WeightedDistances& distances) {
  const int J = distances.size();
  if (state.beta.size() != J) throw ValidationError("beta length does not match distance vector");
  double lp = log_normal_pdf(state.ar_coef, spec.mu_ar, spec.sigma_ar * spec.sigma_ar);
  lp += log_variance_prior(state.sigma2_out, spec);
  if (spec.family == PriorFamily::DHS) {
    const Eigen::VectorXd scales = local_scales(distances, spec.distance_floor);
    for (int i = 0; i < J; ++i) {
      lp += log_normal_pdf(state.beta(i), 0.0, state.sigma2_out * state.lambda2(i) * state.zeta2);
      lp += log_half_cauchy(std::sqrt(state.lambda2(i)), scales(i));
    }
    lp += log_half_cauchy(std::sqrt(state.zeta2), 1.0);
  } else {
    if (static_cast<int>(state.omega.size()) != J) throw ValidationError("omega length does not match donors");
    for (int i = 0; i < J; ++i) {
      if (state.omega[i]) {
        lp += log_normal_pdf(state.beta(i), 0.0, state.sigma2_out * state.nu2_slab);
      } else if (state.beta(i) != 0.0) {
        throw ValidationError("DS2 state has nonzero beta for spiked donor " + std::to_string(i));
      }
    }
    lp += log_half_cauchy(std::sqrt(state.nu2_slab), 1.0);
  }
  return lp;
}

inline double log_posterior(const ModelState& state, const PanelData& panel, const PriorSpec& spec,
                            const WeightedDistances& distances) {
  return log_likelihood(state, panel) + log_prior(state, spec, distances);
}

}  // namespace dbsc
