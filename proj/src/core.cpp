#include "aqbias/core.hpp"

#include <cmath>
#include <sstream>

#include "aqbias/error.hpp"

namespace aqbias {

namespace {

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

void require_len(std::size_t got, std::size_t want, const char* what) {
  if (got != want)
    throw ConfigError(std::string(what) + " has length " + std::to_string(got) +
                      ", expected " + std::to_string(want));
}

}  // namespace

CovariateLayout CovariateLayout::rouen() {
  return {{"roads", "green", "elevation"}, {"inv_ustar", "temperature"}};
}

BiasParameters BiasParameters::zeros(std::size_t k, std::size_t l) {
  BiasParameters p;
  p.thetaT.assign(l, 0.0);
  p.zetaS.assign(k, 0.0);
  p.zetaT.assign(l, 0.0);
  return p;
}

void BiasParameters::validate(std::size_t k, std::size_t l) const {
  require_len(thetaT.size(), l, "thetaT");
  require_len(zetaT.size(), l, "zetaT");
  require_len(zetaS.size(), k, "zetaS");
  auto finite = [](double v) { return std::isfinite(v); };
  bool ok = finite(a0) && finite(ac) && finite(sigma0);
  for (double v : thetaT) ok = ok && finite(v);
  for (double v : zetaS) ok = ok && finite(v);
  for (double v : zetaT) ok = ok && finite(v);
  if (!ok) throw ConfigError("bias parameters contain non-finite values");
  if (!(sigma0 > 0.0)) throw ConfigError("sigma0 must be positive");
}

double eval_l0(const BiasParameters& p, std::span<const double> xt) {
  require_len(xt.size(), p.thetaT.size(), "temporal covariates");
  return p.a0 + dot(p.thetaT, xt);
}

double eval_lc(const BiasParameters& p, std::span<const double> xs,
               std::span<const double> xt) {
  require_len(xs.size(), p.zetaS.size(), "spatial covariates");
  require_len(xt.size(), p.zetaT.size(), "temporal covariates");
  return p.ac + dot(p.zetaS, xs) + dot(p.zetaT, xt);
}

double bias(const BiasParameters& p, double c, std::span<const double> xs,
            std::span<const double> xt) {
  if (!(c >= 0.0)) throw ConfigError("concentration must be non-negative");
  return eval_l0(p, xt) + c * eval_lc(p, xs, xt);
}

Inversion invert_to_concentration(double m, double l0, double lc,
                                  double guard) {
  const double denom = 1.0 + lc;
  if (!(std::abs(denom) > guard)) {
    std::ostringstream os;
    os << "singular correction: |1 + Lc| = " << std::abs(denom)
       << " <= guard " << guard;
    throw SingularCorrectionError(os.str());
  }
  const double c = (m - l0) / denom;
  if (c < 0.0) return {0.0, true};
  return {c, false};
}

double GridGeometry::center_x(std::size_t i) const {
  return origin_x + (static_cast<double>(i) + 0.5) * cell_size;
}

double GridGeometry::center_y(std::size_t j) const {
  return origin_y + (static_cast<double>(j) + 0.5) * cell_size;
}

std::optional<std::size_t> GridGeometry::cell_at(double x, double y) const {
  const double fx = (x - origin_x) / cell_size;
  const double fy = (y - origin_y) / cell_size;
  if (!(fx >= 0.0) || !(fy >= 0.0)) return std::nullopt;
  const auto i = static_cast<std::size_t>(std::floor(fx));
  const auto j = static_cast<std::size_t>(std::floor(fy));
  if (i >= nx || j >= ny) return std::nullopt;
  return index(i, j);
}

void ConcentrationGrid::validate() const {
  if (!(geometry.cell_size > 0.0))
    throw FormatError("grid cell size must be positive");
  if (geometry.nx == 0 || geometry.ny == 0)
    throw FormatError("grid has no cells");
  if (values.size() != geometry.size())
    throw FormatError("grid payload holds " + std::to_string(values.size()) +
                      " values, header declares " +
                      std::to_string(geometry.size()));
}

std::size_t ConcentrationGrid::nodata_count() const {
  std::size_t n = 0;
  for (double v : values) n += is_nodata(v) ? 1 : 0;
  return n;
}

void CovariateStack::validate() const {
  for (const auto& layer : layers)
    if (layer.size() != geometry.size())
      throw FormatError("covariate layer size does not match its geometry");
}

ConcentrationGrid correct_grid(const ConcentrationGrid& grid,
                               const CovariateStack& xs,
                               std::span<const double> xt,
                               const BiasParameters& p, double guard,
                               Exec exec) {
  grid.validate();
  xs.validate();
  if (!(xs.geometry == grid.geometry))
    throw ConfigError("covariate rasters do not share the concentration grid "
                      "geometry");
  require_len(xs.k(), p.zetaS.size(), "spatial covariate stack");
  require_len(xt.size(), p.thetaT.size(), "temporal covariates");

  ConcentrationGrid out;
  out.geometry = grid.geometry;
  out.timestamp = grid.timestamp;
  out.nodata = grid.nodata;
  out.values.resize(grid.values.size());

  const kernels::CorrectionInput in{grid.values, &xs, xt, &p, grid.nodata,
                                    guard};
  const auto tally = exec == Exec::parallel
                         ? kernels::correct_cells_omp(in, out.values)
                         : kernels::correct_cells_serial(in, out.values);
  if (tally.singular) {
    const std::size_t c = *tally.singular;
    const std::size_t i = c % grid.geometry.nx;
    const std::size_t j = c / grid.geometry.nx;
    std::ostringstream os;
    os << "singular correction at cell (" << i << ", " << j << ") centre ("
       << grid.geometry.center_x(i) << ", " << grid.geometry.center_y(j)
       << ") time " << format_hour(grid.timestamp) << ": |1 + Lc| <= "
       << guard;
    throw SingularCorrectionError(os.str());
  }
  out.clamped = tally.clamped;
  return out;
}

}  // namespace aqbias
