#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "aqbias/core.hpp"
#include "aqbias/measurement.hpp"

namespace aqbias {

struct GlsOptions {
  double tolerance = 1e-8;       // relative coefficient change
  std::size_t max_iterations = 50;
  /// Smallest eigenvalue of the column-normalised Gram matrix, relative to
  /// the largest, below which the design counts as rank deficient.
  double rank_tolerance = 1e-10;
  double guard = kDefaultGuard;
  /// When set, ac, zetaS and zetaT are held at these values and only a0,
  /// thetaT (and sigma0) are estimated.
  std::optional<BiasParameters> fixed_multiplicative;
};

struct GlsResult {
  BiasParameters params;
  /// Design column names, in coefficient order.
  std::vector<std::string> columns;
  /// Coefficients of the first (unit-weight) pass and of the final pass.
  std::vector<double> first_pass;
  std::vector<double> coefficients;
  /// Row weights used by each pass (the first is all ones).
  std::vector<std::vector<double>> weights_history;
  std::size_t iterations = 0;
  bool converged = false;
};

/// Feasible GLS of m on [1, xt, z, z*xs, z*xt] with weights 1/(1 + Lc)^2
/// re-estimated from the current coefficients. Station rows only. Throws
/// DataError naming the collinear columns when the design is rank
/// deficient, ConfigError when sensor rows are present.
GlsResult gls_fit(const std::vector<RegressionRow>& station_rows,
                  const CovariateLayout& layout, const GlsOptions& opt = {});

}  // namespace aqbias
