#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "aqbias/core.hpp"
#include "aqbias/measurement.hpp"
#include "aqbias/priors.hpp"

namespace aqbias {

struct SamplerConfig {
  std::size_t n_adapt = 8000;
  std::size_t n_burn = 2000;
  std::size_t n_keep = 2500;
  std::size_t n_chains = 3;
  std::uint64_t seed = 20221201;
  double target_accept = 0.30;
  double guard = kDefaultGuard;
  LikelihoodForm likelihood = LikelihoodForm::measurement;

  void validate() const;
  nlohmann::json to_json() const;
  static SamplerConfig from_json(const nlohmann::json& j);
};

/// Posterior draws and their summaries.
struct ChainResult {
  ParameterLayout layout;
  std::size_t n_keep = 0;
  /// draws[c] is row-major n_keep x p (natural parameter scale).
  std::vector<std::vector<double>> draws;
  /// Per chain, per parameter acceptance rate after adaptation.
  std::vector<std::vector<double>> acceptance;
  /// Frozen random-walk scales in working coordinates.
  std::vector<std::vector<double>> proposal_scales;

  std::vector<double> mean;
  std::vector<double> sd;
  std::vector<double> mode;
  std::vector<double> rhat;
  std::vector<double> ess;

  std::size_t n_chains() const { return draws.size(); }
  std::size_t n_params() const { return layout.size(); }
  double draw(std::size_t chain, std::size_t iter, std::size_t param) const {
    return draws[chain][iter * n_params() + param];
  }
  /// All retained draws of one parameter, chain after chain.
  std::vector<double> pooled(std::size_t param) const;
  /// Fills mean, sd, mode, rhat and ess from the draws.
  void summarize();

  bool operator==(const ChainResult&) const = default;
};

/// Adaptive random-walk Metropolis-within-Gibbs. Each scalar is updated in
/// turn against loglik + log prior. Requires at least one station row.
/// `init` is a natural-scale vector in layout order (prior means when
/// absent). Deterministic given cfg.seed.
ChainResult gibbs_fit(const std::vector<RegressionRow>& rows,
                      const PriorSpec& priors, const SamplerConfig& cfg,
                      const std::optional<std::vector<double>>& init = std::nullopt);

/// Starting point used when gibbs_fit gets no init: prior means, with the
/// bias block taken from gls_fit on the station rows (moved into the prior
/// support) when the station design has full rank and keeps |1 + Lc| above
/// the guard on every row.
std::vector<double> default_start(const std::vector<RegressionRow>& rows, const PriorSpec& priors,
                                  double guard = kDefaultGuard);

/// Layout gibbs_fit uses for a row list (sensors sorted by id).
ParameterLayout layout_for_rows(const std::vector<RegressionRow>& rows,
                                const CovariateLayout& covariates,
                                const std::vector<std::string>& channels);

enum class EstimateKind { mean, mode };

struct PosteriorEstimate {
  BiasParameters bias;
  std::vector<SensorCalibration> sensors;
};

/// Repackages a natural-scale vector into typed parameters.
PosteriorEstimate unpack_parameters(const ParameterLayout& layout,
                                    const std::vector<double>& theta);
std::vector<double> pack_parameters(const ParameterLayout& layout,
                                    const PosteriorEstimate& est);

PosteriorEstimate posterior_estimate(const ChainResult& chains, EstimateKind kind);

/// Marginal mode: mean of the draws falling in the fullest of
/// ceil(sqrt(n)) equal-width bins (lowest bin wins ties).
double binned_mode(const std::vector<double>& draws);

}  // namespace aqbias
