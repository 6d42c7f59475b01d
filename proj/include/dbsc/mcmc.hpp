#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <exception>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include "dbsc/distance.hpp"
#include "dbsc/error.hpp"
#include "dbsc/panel.hpp"
#include "dbsc/priors.hpp"
#include "dbsc/rng.hpp"

namespace dbsc {

struct McmcConfig {
  int n_chains = 1;
  int n_iterations = 4000;
  std::optional<int> n_burnin;  // defaults to half of n_iterations
  std::uint64_t seed = 1;
  int thin = 1;
  double slice_width = 1.0;
  int max_slice_steps = 200;
  int parallelism = 1;  // chains run concurrently, at most this many at once

  // Test hooks: hold blocks at their initial values.
  bool freeze_shrinkage = false;
  bool freeze_variance = false;

  int burnin() const { return n_burnin.value_or(n_iterations / 2); }
  int retained() const { return (n_iterations - burnin()) / thin; }

  std::vector<std::string> violations() const {
    std::vector<std::string> v;
    if (n_chains < 1) v.push_back("n_chains must be >= 1");
    if (n_iterations < 1) v.push_back("n_iterations must be >= 1");
    if (thin < 1) v.push_back("thin must be >= 1");
    if (burnin() < 0 || burnin() >= n_iterations) v.push_back("n_burnin must satisfy 0 <= n_burnin < n_iterations");
    else if (thin >= 1 && (n_iterations - burnin()) % thin != 0)
      v.push_back("n_iterations - n_burnin must be divisible by thin");
    if (!(slice_width > 0.0)) v.push_back("slice_width must be > 0");
    if (max_slice_steps < 1) v.push_back("max_slice_steps must be >= 1");
    if (parallelism < 1) v.push_back("parallelism must be >= 1");
    return v;
  }
  void validate() const {
    auto v = violations();
    if (!v.empty()) throw ValidationError(v.front());
  }
};

struct ChainStats {
  long long slice_evaluations = 0;
  int max_shrink_steps = 0;
};

struct PosteriorDraws {
  PriorFamily family = PriorFamily::DS2;
  std::vector<std::vector<ModelState>> chains;  // retained draws per chain
  std::vector<int> iterations;                  // iteration index of each retained draw
  std::vector<std::uint8_t> omega;              // component assignment (all 1 for DHS)
  std::vector<ChainStats> stats;
  std::uint64_t seed = 0;
  std::uint64_t config_hash = 0;

  int n_chains() const { return static_cast<int>(chains.size()); }
  int per_chain() const { return chains.empty() ? 0 : static_cast<int>(chains.front().size()); }
  int total() const { return n_chains() * per_chain(); }
};

/// Resolves the DS2 cutoff from an exclusion fraction when needed. Returns
/// the cutoff details when one was derived.
inline std::optional<Cutoff> resolve_cutoff(PriorSpec& spec, const WeightedDistances& distances) {
  if (spec.family != PriorFamily::DS2 || spec.rho) return std::nullopt;
  if (!spec.exclusion_fraction) throw ValidationError("DS2 requires either 'rho' or 'exclusion_fraction'");
  Cutoff c = cutoff_from_exclusion_fraction(distances.d_c, *spec.exclusion_fraction);
  spec.rho = c.rho;
  return c;
}

namespace detail {

// Pre-period regression pieces on the standardized scale: rows t = 2..T0,
// columns = active donors then the lagged treated outcome.
struct Design {
  std::vector<int> active;  // donor indices with a nonzero coefficient
  Eigen::MatrixXd X;
  Eigen::VectorXd y;
  Eigen::MatrixXd gram;
  Eigen::VectorXd xty;

  Design(const PanelData& panel, std::vector<int> active_donors) : active(std::move(active_donors)) {
    const int n_obs = panel.intervention_time - 1;
    const int p = static_cast<int>(active.size());
    X.resize(n_obs, p + 1);
    y.resize(n_obs);
    for (int r = 0; r < n_obs; ++r) {
      const int t = r + 1;
      for (int k = 0; k < p; ++k) X(r, k) = panel.donor_outcomes(t, active[k]);
      X(r, p) = panel.treated_outcomes(t - 1);
      y(r) = panel.treated_outcomes(t);
    }
    gram = X.transpose() * X;
    xty = X.transpose() * y;
  }
  int n_obs() const { return static_cast<int>(y.size()); }
  int n_active() const { return static_cast<int>(active.size()); }
};

}  // namespace detail

/// Starting state: beta = 0, ar_coef = mu_ar, sigma2_out = residual variance
/// of the lag-only pre-period regression (floored at 1e-4), local scales at
/// the distance scales, global scales at 1 and auxiliaries at the mode of
/// their full conditionals.
inline ModelState initialize(const PanelData& panel, const PriorSpec& spec, const WeightedDistances& distances) {
  const int J = panel.n_donors();
  if (distances.size() != J) throw ValidationError("distance vector length does not match donor count");
  ModelState s;
  s.beta = Eigen::VectorXd::Zero(J);
  s.ar_coef = spec.mu_ar;

  const int T0 = panel.intervention_time;
  double sxy = 0.0, sxx = 0.0;
  for (int t = 1; t < T0; ++t) {
    sxy += panel.treated_outcomes(t) * panel.treated_outcomes(t - 1);
    sxx += panel.treated_outcomes(t - 1) * panel.treated_outcomes(t - 1);
  }
  const double slope = sxx > 0.0 ? sxy / sxx : 0.0;
  double rss = 0.0;
  for (int t = 1; t < T0; ++t) {
    const double r = panel.treated_outcomes(t) - slope * panel.treated_outcomes(t - 1);
    rss += r * r;
  }
  s.sigma2_out = std::max(rss / (T0 - 1), 1e-4);

  const Eigen::VectorXd scales = local_scales(distances, spec.distance_floor);
  s.lambda2 = scales.array().square();
  s.aux_lambda = scales.array().square().inverse();
  s.zeta2 = 1.0;
  s.aux_zeta = 1.0;
  s.nu2_slab = 1.0;
  s.aux_nu = 1.0;
  if (spec.family == PriorFamily::DS2) {
    if (!spec.rho) throw ValidationError("DS2 cutoff rho is not resolved");
    s.omega = assign_components(distances, *spec.rho);
  } else {
    s.omega.assign(J, 1);
  }
  return s;
}

/// One Metropolis-within-Gibbs chain. Each sweep:
///   1. (beta_active, ar_coef) jointly from their Gaussian full conditional;
///   2. shrinkage scales and auxiliaries from inverse-gamma conditionals;
///   3. sigma2_out by slice sampling on log(sigma2_out).
class ChainSampler {
 public:
  ChainSampler(const PanelData& panel, const PriorSpec& spec, const WeightedDistances& distances,
               const McmcConfig& config, ModelState init, std::uint64_t seed)
      : spec_(spec),
        config_(config),
        scales2_(local_scales(distances, spec.distance_floor).array().square()),
        design_(panel, active_set(init)),
        state_(std::move(init)),
        rng_(seed) {
    const double lp = log_posterior(state_, panel, spec, distances);
    if (!std::isfinite(lp)) throw NumericalError("posterior density is not finite at the initial state");
    coef_.resize(design_.n_active() + 1);
    for (int k = 0; k < design_.n_active(); ++k) coef_(k) = state_.beta(design_.active[k]);
    coef_(design_.n_active()) = state_.ar_coef;
  }

  const ModelState& state() const { return state_; }
  const ChainStats& stats() const { return stats_; }

  void sweep(int iteration) {
    update_coefficients();
    if (!config_.freeze_shrinkage) update_shrinkage();
    if (!config_.freeze_variance) update_variance(iteration);
  }

 private:
  static std::vector<int> active_set(const ModelState& s) {
    std::vector<int> a;
    for (int i = 0; i < static_cast<int>(s.omega.size()); ++i)
      if (s.omega[i]) a.push_back(i);
    return a;
  }

  // Prior variance of beta_i relative to sigma2_out.
  double relative_prior_variance(int donor) const {
    return spec_.family == PriorFamily::DHS ? state_.lambda2(donor) * state_.zeta2 : state_.nu2_slab;
  }

  void update_coefficients() {
    const int p = design_.n_active();
    const double s2 = state_.sigma2_out;
    const double prec_ar = 1.0 / (spec_.sigma_ar * spec_.sigma_ar);
    // Work with precision scaled by sigma2: Q = X'X + sigma2 * D.
    Eigen::MatrixXd Q = design_.gram;
    for (int k = 0; k < p; ++k) Q(k, k) += 1.0 / relative_prior_variance(design_.active[k]);
    Q(p, p) += s2 * prec_ar;
    Eigen::VectorXd rhs = design_.xty;
    rhs(p) += s2 * prec_ar * spec_.mu_ar;

    Eigen::LLT<Eigen::MatrixXd> llt(Q);
    if (llt.info() != Eigen::Success) throw NumericalError("coefficient precision is not positive definite");
    Eigen::VectorXd mean = llt.solve(rhs);
    Eigen::VectorXd z(p + 1);
    for (int k = 0; k <= p; ++k) z(k) = rng_.normal();
    // cov = s2 * Q^{-1} = s2 * L^{-T} L^{-1}
    Eigen::VectorXd dev = llt.matrixU().solve(z) * std::sqrt(s2);
    coef_ = mean + dev;
    if (!coef_.allFinite()) throw NumericalError("non-finite coefficient draw");
    for (int k = 0; k < p; ++k) state_.beta(design_.active[k]) = coef_(k);
    state_.ar_coef = coef_(p);
  }

  static double clamp_scale(double x) { return std::clamp(x, 1e-300, 1e300); }

  void update_shrinkage() {
    const double s2 = state_.sigma2_out;
    if (spec_.family == PriorFamily::DHS) {
      const int J = static_cast<int>(state_.beta.size());
      for (int i = 0; i < J; ++i) {
        const double b2 = state_.beta(i) * state_.beta(i);
        state_.lambda2(i) =
            clamp_scale(rng_.inv_gamma(1.0, 1.0 / state_.aux_lambda(i) + b2 / (2.0 * s2 * state_.zeta2)));
        state_.aux_lambda(i) = clamp_scale(rng_.inv_gamma(1.0, 1.0 / scales2_(i) + 1.0 / state_.lambda2(i)));
      }
      double ss = 0.0;
      for (int i = 0; i < J; ++i) ss += state_.beta(i) * state_.beta(i) / state_.lambda2(i);
      state_.zeta2 = clamp_scale(rng_.inv_gamma(0.5 * (J + 1), 1.0 / state_.aux_zeta + ss / (2.0 * s2)));
      state_.aux_zeta = clamp_scale(rng_.inv_gamma(1.0, 1.0 + 1.0 / state_.zeta2));
    } else {
      double ss = 0.0;
      for (int i : design_.active) ss += state_.beta(i) * state_.beta(i);
      const int p = design_.n_active();
      state_.nu2_slab = clamp_scale(rng_.inv_gamma(0.5 * (p + 1), 1.0 / state_.aux_nu + ss / (2.0 * s2)));
      state_.aux_nu = clamp_scale(rng_.inv_gamma(1.0, 1.0 + 1.0 / state_.nu2_slab));
    }
  }

  // Log full conditional of u = log(sigma2_out), up to a constant.
  double log_variance_conditional(double u, double rss, double beta_ss, int n_prior_terms) const {
    const double s2 = std::exp(u);
    return -0.5 * (design_.n_obs() + n_prior_terms) * u - 0.5 * (rss + beta_ss) / s2 + log_variance_prior(s2, spec_) +
           u;
  }

  void update_variance(int iteration) {
    const Eigen::VectorXd resid = design_.y - design_.X * coef_;
    const double rss = resid.squaredNorm();
    double beta_ss = 0.0;
    int n_terms = 0;
    for (int i : design_.active) {
      beta_ss += state_.beta(i) * state_.beta(i) / relative_prior_variance(i);
      ++n_terms;
    }
    auto f = [&](double u) {
      ++stats_.slice_evaluations;
      return log_variance_conditional(u, rss, beta_ss, n_terms);
    };

    // Stepping-out and shrinkage.
    const double u0 = std::log(state_.sigma2_out);
    const double level = f(u0) + std::log(rng_.uniform_pos());
    const double w = config_.slice_width;
    double left = u0 - w * rng_.uniform(0.0, 1.0);
    double right = left + w;
    const int m = config_.max_slice_steps;
    int steps_left = static_cast<int>(std::floor(m * rng_.uniform(0.0, 1.0)));
    int steps_right = m - 1 - steps_left;
    while (steps_left-- > 0 && f(left) > level) left -= w;
    while (steps_right-- > 0 && f(right) > level) right += w;

    for (int step = 1;; ++step) {
      const double u = rng_.uniform(left, right);
      if (f(u) > level) {
        state_.sigma2_out = std::exp(u);
        stats_.max_shrink_steps = std::max(stats_.max_shrink_steps, step);
        break;
      }
      if (step >= config_.max_slice_steps)
        throw NumericalError("slice sampler exceeded max_slice_steps at iteration " + std::to_string(iteration));
      (u < u0 ? left : right) = u;
    }
    if (!(state_.sigma2_out > 0.0) || !std::isfinite(state_.sigma2_out))
      throw NumericalError("non-finite outcome variance at iteration " + std::to_string(iteration));
  }

  const PriorSpec& spec_;
  const McmcConfig& config_;
  Eigen::VectorXd scales2_;
  detail::Design design_;
  ModelState state_;
  Eigen::VectorXd coef_;
  Rng rng_;
  ChainStats stats_;
};

inline std::uint64_t fnv1a(std::string_view bytes, std::uint64_t h = 0xcbf29ce484222325ULL) {
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::uint64_t config_hash(const PriorSpec& spec, const McmcConfig& c) {
  std::string s = std::string(to_string(spec.family)) + '|' + csv::format(spec.kappa_d) + '|' +
                  csv::format(spec.rho.value_or(-1.0)) + '|' + csv::format(spec.mu_ar) + '|' +
                  csv::format(spec.sigma_ar) + '|' + csv::format(spec.nu_var) + '|' + csv::format(spec.tau_var) + '|' +
                  std::to_string(static_cast<int>(spec.variance_prior_on)) + '|' + csv::format(spec.distance_floor) +
                  '|' + std::to_string(c.n_chains) + '|' + std::to_string(c.n_iterations) + '|' +
                  std::to_string(c.burnin()) + '|' + std::to_string(c.thin) + '|' + std::to_string(c.seed) + '|' +
                  csv::format(c.slice_width) + '|' + std::to_string(c.max_slice_steps) + '|' +
                  std::to_string(c.freeze_shrinkage) + std::to_string(c.freeze_variance);
  return fnv1a(s);
}

/// Runs the configured number of chains. `init` overrides the default
/// starting state (used with the freeze hooks to pin blocks at known values).
/// Chain c uses the RNG stream derive_seed(seed, c), so results do not depend
/// on `parallelism`.
inline PosteriorDraws fit(const PanelData& panel, const PriorSpec& spec_in, const WeightedDistances& distances,
                          const McmcConfig& config, const ModelState* init = nullptr) {
  config.validate();
  PriorSpec spec = spec_in;
  resolve_cutoff(spec, distances);
  spec.validate();
  panel.validate();
  if (distances.size() != panel.n_donors()) throw ValidationError("distance vector length does not match donors");

  const ModelState start = init ? *init : initialize(panel, spec, distances);
  if (spec.family == PriorFamily::DS2) {
    const auto omega = assign_components(distances, *spec.rho);
    if (omega != start.omega) throw ValidationError("initial state's omega does not match the DS2 cutoff");
  }

  PosteriorDraws draws;
  draws.family = spec.family;
  draws.omega = start.omega;
  draws.seed = config.seed;
  draws.config_hash = config_hash(spec, config);
  draws.chains.resize(config.n_chains);
  draws.stats.resize(config.n_chains);
  const int burnin = config.burnin();
  for (int it = burnin; it < config.n_iterations; it += config.thin) draws.iterations.push_back(it);

  std::vector<std::exception_ptr> errors(config.n_chains);
  auto run_chain = [&](int c) {
    try {
      ChainSampler sampler(panel, spec, distances, config, start, derive_seed(config.seed, static_cast<std::uint64_t>(c)));
      auto& out = draws.chains[c];
      out.reserve(draws.iterations.size());
      for (int it = 0; it < config.n_iterations; ++it) {
        sampler.sweep(it);
        if (it >= burnin && (it - burnin) % config.thin == 0) out.push_back(sampler.state());
      }
      draws.stats[c] = sampler.stats();
    } catch (...) {
      errors[c] = std::current_exception();
    }
  };

  const int workers = std::min(config.parallelism, config.n_chains);
  if (workers <= 1) {
    for (int c = 0; c < config.n_chains; ++c) run_chain(c);
  } else {
    std::vector<std::thread> pool;
    std::mutex mu;
    int next = 0;
    for (int w = 0; w < workers; ++w)
      pool.emplace_back([&] {
        for (;;) {
          int c;
          {
            std::lock_guard<std::mutex> lock(mu);
            if (next >= config.n_chains) return;
            c = next++;
          }
          run_chain(c);
        }
      });
    for (auto& t : pool) t.join();
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  return draws;
}

}  // namespace dbsc
