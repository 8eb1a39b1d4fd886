#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "aqbias/calendar.hpp"

namespace aqbias {

inline constexpr double kDefaultGuard = 1e-3;

/// Names of the spatial and temporal covariates, in the order the
/// coefficient vectors use. Files persist this so columns cannot be
/// permuted silently.
struct CovariateLayout {
  std::vector<std::string> spatial;
  std::vector<std::string> temporal;

  std::size_t k() const { return spatial.size(); }
  std::size_t l() const { return temporal.size(); }

  /// (roads, green, elevation) and (inv_ustar, temperature).
  static CovariateLayout rouen();
  bool operator==(const CovariateLayout&) const = default;
};

/// Bias B = L0 + C * Lc with L0 = a0 + thetaT.xt and
/// Lc = ac + zetaS.xs + zetaT.xt.
struct BiasParameters {
  double a0 = 0.0;
  double ac = 0.0;
  std::vector<double> thetaT;
  std::vector<double> zetaS;
  std::vector<double> zetaT;
  double sigma0 = 1.0;

  static BiasParameters zeros(std::size_t k, std::size_t l);

  std::size_t k() const { return zetaS.size(); }
  std::size_t l() const { return thetaT.size(); }

  /// Throws ConfigError on dimension mismatch, non-finite values or
  /// sigma0 <= 0. The sign of ac is a prior constraint and is not checked.
  void validate(std::size_t k, std::size_t l) const;

  bool operator==(const BiasParameters&) const = default;
};

double eval_l0(const BiasParameters& p, std::span<const double> xt);
double eval_lc(const BiasParameters& p, std::span<const double> xs,
               std::span<const double> xt);

/// B(c) = L0 + c * Lc. Requires c >= 0.
double bias(const BiasParameters& p, double c, std::span<const double> xs,
            std::span<const double> xt);

struct Inversion {
  double value = 0.0;
  bool clamped = false;
};

/// C = (m - l0) / (1 + lc), negative results clamped to zero. Throws
/// SingularCorrectionError when |1 + lc| <= guard.
Inversion invert_to_concentration(double m, double l0, double lc,
                                  double guard = kDefaultGuard);

struct GridGeometry {
  double origin_x = 0.0;
  double origin_y = 0.0;
  double cell_size = 1.0;
  std::size_t nx = 0;
  std::size_t ny = 0;

  std::size_t size() const { return nx * ny; }
  /// Cell (i, j) has its lower-left corner at origin + (i, j) * cell_size.
  std::size_t index(std::size_t i, std::size_t j) const { return j * nx + i; }
  double center_x(std::size_t i) const;
  double center_y(std::size_t j) const;
  /// Point-in-cell lookup; nullopt outside the extent.
  std::optional<std::size_t> cell_at(double x, double y) const;

  bool operator==(const GridGeometry&) const = default;
};

/// One raster of model output. Row j holds cells whose y index is j
/// counted from the origin; values are row-major.
struct ConcentrationGrid {
  GridGeometry geometry;
  Hour timestamp = 0;
  double nodata = -9999.0;
  std::vector<double> values;
  /// Cells clamped to zero by a correction; zero for raw grids.
  std::size_t clamped = 0;

  void validate() const;
  bool is_nodata(double v) const { return v == nodata; }
  std::size_t nodata_count() const;
};

/// k co-registered covariate layers (one per spatial covariate).
struct CovariateStack {
  GridGeometry geometry;
  std::vector<std::vector<double>> layers;

  std::size_t k() const { return layers.size(); }
  void validate() const;
};

enum class Exec { serial, parallel };

/// Applies invert_to_concentration cellwise. Nodata cells, and cells where
/// any covariate is non-finite, stay nodata. A singular cell aborts with a
/// SingularCorrectionError naming the first such cell.
ConcentrationGrid correct_grid(const ConcentrationGrid& grid,
                               const CovariateStack& xs,
                               std::span<const double> xt,
                               const BiasParameters& p,
                               double guard = kDefaultGuard,
                               Exec exec = Exec::parallel);

namespace kernels {

struct CorrectionTally {
  std::size_t clamped = 0;
  std::size_t nodata = 0;
  /// Lowest index of a cell with |1 + Lc| <= guard, if any.
  std::optional<std::size_t> singular;
};

struct CorrectionInput {
  std::span<const double> raw;
  const CovariateStack* xs = nullptr;
  std::span<const double> xt;
  const BiasParameters* p = nullptr;
  double nodata = -9999.0;
  double guard = kDefaultGuard;
};

CorrectionTally correct_cells_serial(const CorrectionInput& in,
                                     std::span<double> out);
CorrectionTally correct_cells_omp(const CorrectionInput& in,
                                  std::span<double> out);

}  // namespace kernels

}  // namespace aqbias
