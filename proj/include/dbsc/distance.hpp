#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "dbsc/error.hpp"

namespace dbsc {

/// Per-donor distances to the treated unit. All components lie in [0, 1] and
/// d_c = kappa_d * d_x + (1 - kappa_d) * d_p elementwise.
struct WeightedDistances {
  Eigen::VectorXd d_x;
  Eigen::VectorXd d_p;
  Eigen::VectorXd d_c;
  double kappa_d = 0.0;
  double scale_S = 1.0;

  int size() const { return static_cast<int>(d_c.size()); }
};

/// 1 / (1 + ||X_i - X_1||) for every donor row i >= 1 of `covariates`
/// (row 0 is the treated unit). With zero covariate columns every donor
/// scores 1.
inline Eigen::VectorXd covariate_dissimilarity(const Eigen::Ref<const Eigen::MatrixXd>& covariates,
                                               Eigen::Index treated_index = 0) {
  const Eigen::Index n = covariates.rows();
  if (treated_index < 0 || treated_index >= n) throw ValidationError("treated index out of range");
  Eigen::VectorXd out(n - 1);
  Eigen::Index k = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (i == treated_index) continue;
    out(k++) = 1.0 / (1.0 + (covariates.row(i) - covariates.row(treated_index)).norm());
  }
  return out;
}

/// Largest pairwise Euclidean distance between rows.
inline double max_pairwise_distance(const Eigen::Ref<const Eigen::MatrixXd>& coordinates) {
  double best = 0.0;
  for (Eigen::Index i = 0; i < coordinates.rows(); ++i)
    for (Eigen::Index j = i + 1; j < coordinates.rows(); ++j)
      best = std::max(best, (coordinates.row(i) - coordinates.row(j)).norm());
  return best;
}

/// ||P_i - P_1|| / S per donor. Without an explicit scale, S is the largest
/// pairwise distance among all units.
inline Eigen::VectorXd spatial_proximity(const Eigen::Ref<const Eigen::MatrixXd>& coordinates,
                                         Eigen::Index treated_index = 0,
                                         std::optional<double> scale_S = std::nullopt,
                                         double* used_scale = nullptr) {
  const Eigen::Index n = coordinates.rows();
  if (treated_index < 0 || treated_index >= n) throw ValidationError("treated index out of range");
  double S = 0.0;
  if (scale_S) {
    if (!(*scale_S > 0.0)) throw ValidationError("spatial scale S must be > 0");
    S = *scale_S;
  } else {
    S = max_pairwise_distance(coordinates);
    if (!(S > 0.0)) throw ValidationError("all units are co-located (maximum pairwise distance is 0)");
  }
  if (used_scale) *used_scale = S;
  Eigen::VectorXd out(n - 1);
  Eigen::Index k = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (i == treated_index) continue;
    out(k++) = (coordinates.row(i) - coordinates.row(treated_index)).norm() / S;
  }
  return out;
}

inline WeightedDistances weighted_distance(const Eigen::VectorXd& d_x, const Eigen::VectorXd& d_p, double kappa_d,
                                           double scale_S = 1.0) {
  if (!(kappa_d >= 0.0 && kappa_d <= 1.0)) throw ValidationError("kappa_d must be in [0,1]");
  if (d_x.size() != d_p.size()) throw ValidationError("d_x and d_p lengths differ");
  WeightedDistances w;
  w.d_x = d_x;
  w.d_p = d_p;
  w.kappa_d = kappa_d;
  w.scale_S = scale_S;
  w.d_c.resize(d_x.size());
  for (Eigen::Index i = 0; i < d_x.size(); ++i) w.d_c(i) = kappa_d * d_x(i) + (1.0 - kappa_d) * d_p(i);
  return w;
}

/// Full distance computation for a (standardized) panel layout: covariates
/// and coordinates with the treated unit in row 0.
inline WeightedDistances compute_distances(const Eigen::Ref<const Eigen::MatrixXd>& covariates,
                                           const Eigen::Ref<const Eigen::MatrixXd>& coordinates, double kappa_d,
                                           std::optional<double> scale_S = std::nullopt) {
  double S = 0.0;
  Eigen::VectorXd d_p = spatial_proximity(coordinates, 0, scale_S, &S);
  Eigen::VectorXd d_x = covariate_dissimilarity(covariates, 0);
  return weighted_distance(d_x, d_p, kappa_d, S);
}

struct Cutoff {
  double rho = 0.0;
  int n_excluded = 0;      // donors with d_c <= rho
  int n_target = 0;        // ceil(fraction * J)
  bool ties_expanded = false;  // more donors excluded than targeted because of ties at rho
};

/// Cutoff rho such that {i : d_c[i] <= rho} holds ceil(fraction * J) donors.
/// Donors tied with the last excluded value are excluded too.
inline Cutoff cutoff_from_exclusion_fraction(const Eigen::VectorXd& d_c, double fraction) {
  if (!(fraction >= 0.0 && fraction < 1.0)) throw ValidationError("exclusion fraction must be in [0,1)");
  if (d_c.size() == 0) throw ValidationError("empty distance vector");
  std::vector<double> sorted(d_c.data(), d_c.data() + d_c.size());
  std::sort(sorted.begin(), sorted.end());
  const int J = static_cast<int>(sorted.size());
  Cutoff c;
  // Guard against fraction * J landing a rounding error above an integer.
  c.n_target = static_cast<int>(std::ceil(fraction * J - 1e-9));
  if (c.n_target == 0) {
    c.rho = std::nextafter(sorted.front(), -std::numeric_limits<double>::infinity());
  } else {
    c.rho = sorted[c.n_target - 1];
  }
  c.n_excluded = static_cast<int>(std::count_if(sorted.begin(), sorted.end(), [&](double v) { return v <= c.rho; }));
  c.ties_expanded = c.n_excluded > c.n_target;
  return c;
}

}  // namespace dbsc
