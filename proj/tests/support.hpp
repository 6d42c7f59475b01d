#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>

#include <Eigen/Dense>

#include "dbsc/mcmc.hpp"
#include "dbsc/panel.hpp"
#include "dbsc/pipeline.hpp"
#include "dbsc/rng.hpp"

namespace dbsc::testing {

// Small random panel: AR(1) treated series loosely tied to the first donors.
inline PanelData random_panel(int T, int T0, int J, std::uint64_t seed, int q = 2, int k = 2) {
  Rng rng(seed);
  PanelData p;
  p.intervention_time = T0;
  p.donor_outcomes.resize(T, J);
  p.treated_outcomes.resize(T);
  for (int j = 0; j < J; ++j) {
    double v = rng.normal();
    for (int t = 0; t < T; ++t) {
      v = 0.5 * v + rng.normal();
      p.donor_outcomes(t, j) = 3.0 + v;
    }
  }
  double prev = 0.0;
  for (int t = 0; t < T; ++t) {
    const double mix = J >= 2 ? 0.5 * (p.donor_outcomes(t, 0) + p.donor_outcomes(t, 1)) : p.donor_outcomes(t, 0);
    prev = 0.3 * prev + 0.7 * mix + 0.3 * rng.normal();
    p.treated_outcomes(t) = prev;
  }
  p.covariates.resize(J + 1, q);
  p.coordinates.resize(J + 1, k);
  for (int i = 0; i <= J; ++i) {
    for (int c = 0; c < q; ++c) p.covariates(i, c) = rng.normal();
    for (int c = 0; c < k; ++c) p.coordinates(i, c) = rng.uniform(0.0, 100.0);
    p.unit_labels.push_back(std::to_string(i + 1));
  }
  for (int c = 0; c < q; ++c) p.covariate_names.push_back("x" + std::to_string(c + 1));
  for (int c = 0; c < k; ++c) p.coordinate_names.push_back("p" + std::to_string(c + 1));
  return p;
}

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static std::random_device rd;
    path_ = std::filesystem::temp_directory_path() / ("dbsc_" + tag + "_" + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

  std::filesystem::path write(const std::string& name, const std::string& text) const {
    std::ofstream(path_ / name, std::ios::binary) << text;
    return path_ / name;
  }

 private:
  std::filesystem::path path_;
};

inline std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Two-sample Kolmogorov-Smirnov test, asymptotic p-value.
inline double ks_two_sample_p(std::vector<double> a, std::vector<double> b) {
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  const double n = static_cast<double>(a.size()), m = static_cast<double>(b.size());
  std::size_t i = 0, j = 0;
  double d = 0.0;
  while (i < a.size() && j < b.size()) {
    const double x = std::min(a[i], b[j]);
    while (i < a.size() && a[i] == x) ++i;
    while (j < b.size() && b[j] == x) ++j;
    d = std::max(d, std::abs(i / n - j / m));
  }
  const double ne = n * m / (n + m);
  const double lambda = (std::sqrt(ne) + 0.12 + 0.11 / std::sqrt(ne)) * d;
  // Kolmogorov tail series.
  double p = 0.0;
  for (int k = 1; k <= 100; ++k) p += 2.0 * ((k % 2) ? 1.0 : -1.0) * std::exp(-2.0 * k * k * lambda * lambda);
  return std::clamp(p, 0.0, 1.0);
}

// Closed-form Gaussian posterior of (beta, ar_coef) when the shrinkage scales
// and the outcome variance are held fixed. Built directly from the panel.
struct GaussianPosterior {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;
};

inline GaussianPosterior conjugate_posterior(const PanelData& p, const PriorSpec& spec, const ModelState& s) {
  const int J = p.n_donors();
  const int T0 = p.intervention_time;
  Eigen::MatrixXd X(T0 - 1, J + 1);
  Eigen::VectorXd y(T0 - 1);
  for (int t = 1; t < T0; ++t) {
    X.row(t - 1).head(J) = p.donor_outcomes.row(t);
    X(t - 1, J) = p.treated_outcomes(t - 1);
    y(t - 1) = p.treated_outcomes(t);
  }
  Eigen::VectorXd prior_prec(J + 1);
  for (int i = 0; i < J; ++i) prior_prec(i) = 1.0 / (s.sigma2_out * s.lambda2(i) * s.zeta2);
  prior_prec(J) = 1.0 / (spec.sigma_ar * spec.sigma_ar);
  Eigen::MatrixXd P = X.transpose() * X / s.sigma2_out;
  P.diagonal() += prior_prec;
  Eigen::VectorXd b = X.transpose() * y / s.sigma2_out;
  b(J) += spec.mu_ar / (spec.sigma_ar * spec.sigma_ar);
  GaussianPosterior g;
  g.cov = P.inverse();
  g.mean = g.cov * b;
  return g;
}

// Pooled (beta, ar_coef) draws as rows.
inline Eigen::MatrixXd coefficient_draws(const PosteriorDraws& d) {
  const int J = static_cast<int>(d.chains.front().front().beta.size());
  Eigen::MatrixXd out(d.total(), J + 1);
  int r = 0;
  for (const auto& chain : d.chains)
    for (const auto& s : chain) {
      out.row(r).head(J) = s.beta.transpose();
      out(r++, J) = s.ar_coef;
    }
  return out;
}

}  // namespace dbsc::testing
