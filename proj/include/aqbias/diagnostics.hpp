#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace aqbias {

struct ChainResult;

inline constexpr double kRhatThreshold = 1.05;

/// Split R-hat over the chains of one parameter (each chain is split into
/// halves; an odd middle draw is dropped). Zero within-chain variance gives
/// 1 when all half-chain means agree and +inf otherwise.
double split_rhat(const std::vector<std::vector<double>>& chains);

/// Effective sample size from the multi-chain autocorrelation estimate with
/// Geyer's initial monotone sequence, on split chains.
double effective_sample_size(const std::vector<std::vector<double>>& chains);

/// Monte-Carlo standard error of the posterior mean: sd / sqrt(ESS).
double mcse_mean(const std::vector<std::vector<double>>& chains);

struct DiagnosticsReport {
  std::vector<std::string> names;
  std::vector<double> rhat;
  std::vector<double> ess;
  std::vector<double> acceptance;  // averaged over chains
  std::vector<std::string> flagged;  // R-hat above the threshold
  bool within_chain_only = false;
  std::string warning;

  /// Fixed-width table, one line per parameter.
  std::string table() const;
};

DiagnosticsReport diagnostics(const ChainResult& chains,
                              double rhat_threshold = kRhatThreshold);

/// Draws of one parameter split per chain.
std::vector<std::vector<double>> chains_of(const ChainResult& chains,
                                           std::size_t param);

}  // namespace aqbias
