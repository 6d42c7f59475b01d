#pragma once

// Synthetic panels from a linear three-factor model with a common trend,
// two baseline covariates and a spillover on donors that decays with
// distance to the treated unit.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "dbsc/error.hpp"
#include "dbsc/panel.hpp"
#include "dbsc/rng.hpp"

namespace dbsc {

struct SimConfig {
  int T0 = 30;
  int n_post = 1;
  int J = 50;
  double tau_true = 7.0;
  double xi_spill = -10.0;
  std::optional<double> rho_star;
  std::optional<double> spill_fraction;
  std::array<double, 2> mu_shift{0.0, 0.0};
  std::uint64_t seed = 1;

  std::vector<std::string> violations() const {
    std::vector<std::string> v;
    if (J < 1) v.push_back("J must be >= 1");
    if (T0 < 2) v.push_back("T0 must be >= 2");
    if (n_post < 1) v.push_back("n_post must be >= 1");
    if (rho_star.has_value() == spill_fraction.has_value())
      v.push_back("exactly one of 'rho_star' or 'spill_fraction' must be set");
    if (rho_star && !(*rho_star >= 0.0)) v.push_back("rho_star must be >= 0");
    if (spill_fraction && !(*spill_fraction >= 0.0 && *spill_fraction <= 1.0))
      v.push_back("spill_fraction must be in [0,1]");
    return v;
  }
  void validate() const {
    auto v = violations();
    if (!v.empty()) throw ValidationError(v.front());
  }
};

struct SimTruth {
  Eigen::MatrixXd untreated_outcomes;  // T x n, Y_it(0); column 0 is the treated unit
  std::vector<std::uint8_t> affected;  // per donor: d_i < rho_star
  Eigen::VectorXd distances;           // n, treated first (0)
  Eigen::MatrixXd covariates;          // n x 2
  Eigen::VectorXd shift_indicator;     // n, s_i
  Eigen::MatrixXd factors;             // T x 4: delta_t, f_1t, f_2t, f_3t
  Eigen::MatrixXd loadings;            // n x 3, mu_i
  double rho_star = 0.0;
  double tau_true = 0.0;
  double xi_spill = 0.0;
  int T0 = 0;
};

/// rho* with exactly floor(fraction * J) donors strictly inside it.
inline double affected_fraction_to_rho_star(const Eigen::VectorXd& donor_distances, double fraction) {
  if (!(fraction >= 0.0 && fraction <= 1.0)) throw ValidationError("spill fraction must be in [0,1]");
  if (donor_distances.size() == 0) throw ValidationError("empty distance vector");
  std::vector<double> d(donor_distances.data(), donor_distances.data() + donor_distances.size());
  std::sort(d.begin(), d.end());
  const int J = static_cast<int>(d.size());
  const int k = static_cast<int>(std::floor(fraction * J + 1e-9));
  if (k >= J) return std::nextafter(d.back(), std::numeric_limits<double>::infinity());
  return d[k];
}

inline double spillover_term(double xi, double distance) { return xi * std::exp(-distance); }

inline std::pair<PanelData, SimTruth> generate(const SimConfig& config) {
  config.validate();
  Rng rng(config.seed);
  const int J = config.J;
  const int n = J + 1;
  const int T = config.T0 + config.n_post;

  Eigen::MatrixXd base(n, 2);
  for (int i = 0; i < n; ++i)
    for (int c = 0; c < 2; ++c) base(i, c) = rng.normal();

  // Half-normal distances for donors; the treated unit sits at 0.
  Eigen::VectorXd dist = Eigen::VectorXd::Zero(n);
  for (int i = 1; i < n; ++i) dist(i) = std::abs(rng.normal());
  const double max_dist = dist.maxCoeff();

  Eigen::VectorXd shifted(n);
  Eigen::MatrixXd X = base;
  for (int i = 0; i < n; ++i) {
    const double p = max_dist > 0.0 ? dist(i) / max_dist : 0.0;
    shifted(i) = rng.bernoulli(p) ? 1.0 : 0.0;
    for (int c = 0; c < 2; ++c) X(i, c) += shifted(i) * config.mu_shift[c];
  }

  Eigen::MatrixXd loadings(n, 3);
  for (int i = 0; i < n; ++i)
    for (int k = 0; k < 3; ++k) loadings(i, k) = rng.uniform(0.0, 1.0);

  const Eigen::Vector2d covariate_effect(-0.5, 0.5);
  const Eigen::VectorXd covariate_part = X * covariate_effect;

  Eigen::MatrixXd y0(T, n);
  Eigen::MatrixXd factors(T, 4);
  double delta = 0.0, f1 = 0.0, f2 = 0.0, f3 = 0.0;
  for (int t = 0; t < T; ++t) {
    const double e0 = rng.normal(), e1 = rng.normal(), e2 = rng.normal(), e3 = rng.normal();
    delta = 1.0 + 0.5 * delta + e0;
    f1 = 0.5 * f1 + e1;
    f2 = 1.0 + 0.5 * f2 + e2;
    f3 = 0.5 * f3 + e3;
    factors.row(t) << delta, f1, f2, f3;
    for (int i = 0; i < n; ++i)
      y0(t, i) = delta + covariate_part(i) + f1 * loadings(i, 0) + f2 * loadings(i, 1) + f3 * loadings(i, 2) +
                 rng.normal();
  }

  SimTruth truth;
  truth.rho_star = config.rho_star ? *config.rho_star
                                   : affected_fraction_to_rho_star(dist.tail(J), *config.spill_fraction);
  truth.untreated_outcomes = y0;
  truth.distances = dist;
  truth.covariates = X;
  truth.shift_indicator = shifted;
  truth.factors = factors;
  truth.loadings = loadings;
  truth.tau_true = config.tau_true;
  truth.xi_spill = config.xi_spill;
  truth.T0 = config.T0;
  truth.affected.resize(J);
  for (int j = 0; j < J; ++j) truth.affected[j] = dist(j + 1) < truth.rho_star ? 1 : 0;

  PanelData panel;
  panel.intervention_time = config.T0;
  panel.treated_outcomes = y0.col(0);
  panel.donor_outcomes = y0.rightCols(J);
  for (int t = config.T0; t < T; ++t) {
    panel.treated_outcomes(t) += config.tau_true;
    for (int j = 0; j < J; ++j)
      if (truth.affected[j]) panel.donor_outcomes(t, j) += spillover_term(config.xi_spill, dist(j + 1));
  }
  panel.covariates = X;
  panel.coordinates = dist;
  panel.covariate_names = {"x1", "x2"};
  panel.coordinate_names = {"p1"};
  for (int i = 0; i < n; ++i) panel.unit_labels.push_back(std::to_string(i + 1));
  panel.validate();
  return {std::move(panel), std::move(truth)};
}

}  // namespace dbsc
