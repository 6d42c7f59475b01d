#pragma once

#include <bit>
#include <cstdint>
#include <optional>
#include <vector>

#include "dbsc/counterfactual.hpp"
#include "dbsc/distance.hpp"
#include "dbsc/mcmc.hpp"
#include "dbsc/panel.hpp"
#include "dbsc/priors.hpp"

namespace dbsc {

/// Everything produced by one analysis of an observed panel.
struct Analysis {
  PanelData standardized;
  StandardizationRecord record;
  WeightedDistances distances;
  PriorSpec prior;  // with rho resolved for DS2
  std::optional<Cutoff> cutoff;
  PosteriorDraws draws;
  CounterfactualDraws counterfactual;
  std::vector<EffectEstimate> effects;
};

/// Seed for the counterfactual imputation stage, derived from the sampler seed.
inline std::uint64_t imputation_seed(std::uint64_t mcmc_seed) { return derive_seed(mcmc_seed, 0xC0FFEEULL); }

/// standardize -> distances -> cutoff -> posterior draws -> imputation -> effects.
inline Analysis analyze(const PanelData& observed, const PriorSpec& prior, const McmcConfig& mcmc, double alpha,
                        std::optional<double> scale_S = std::nullopt) {
  Analysis a;
  std::tie(a.standardized, a.record) = standardize(observed);
  a.distances = compute_distances(a.standardized.covariates, a.standardized.coordinates, prior.kappa_d, scale_S);
  a.prior = prior;
  a.cutoff = resolve_cutoff(a.prior, a.distances);
  a.draws = fit(a.standardized, a.prior, a.distances, mcmc);
  a.counterfactual = impute(a.draws, a.standardized, a.record, imputation_seed(mcmc.seed), mcmc.parallelism);
  a.effects = effects(a.counterfactual, observed, alpha);
  return a;
}

/// True when every retained beta of a spiked donor is bitwise +0.0.
inline bool spike_coefficients_are_zero(const PosteriorDraws& draws) {
  for (const auto& chain : draws.chains)
    for (const auto& s : chain)
      for (std::size_t i = 0; i < draws.omega.size(); ++i)
        if (!draws.omega[i] && std::bit_cast<std::uint64_t>(s.beta(static_cast<Eigen::Index>(i))) != 0) return false;
  return true;
}

}  // namespace dbsc
