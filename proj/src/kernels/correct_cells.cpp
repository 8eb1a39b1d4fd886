// Cellwise map correction. The serial loop is the reference; the OpenMP
// loop must produce bit-identical output and tallies.

#include <algorithm>
#include <cmath>
#include <limits>

#include "aqbias/core.hpp"

namespace aqbias::kernels {

namespace {

struct TemporalPart {
  double l0;
  double zt;  // zetaT.xt
};

TemporalPart temporal_part(const CorrectionInput& in) {
  const BiasParameters& p = *in.p;
  double theta = 0.0;
  double zeta = 0.0;
  for (std::size_t t = 0; t < in.xt.size(); ++t) {
    theta += p.thetaT[t] * in.xt[t];
    zeta += p.zetaT[t] * in.xt[t];
  }
  return {p.a0 + theta, zeta};
}

enum class CellOutcome { ok, clamped, nodata, singular };

inline CellOutcome correct_one(const CorrectionInput& in, const TemporalPart& tp,
                               std::size_t c, double& out) {
  const double m = in.raw[c];
  if (m == in.nodata) {
    out = in.nodata;
    return CellOutcome::nodata;
  }
  // Same summation order as eval_lc: ac + zetaS.xs + zetaT.xt.
  const BiasParameters& p = *in.p;
  double spatial = 0.0;
  for (std::size_t s = 0; s < p.zetaS.size(); ++s) {
    const double x = in.xs->layers[s][c];
    if (!std::isfinite(x)) {
      out = in.nodata;
      return CellOutcome::nodata;
    }
    spatial += p.zetaS[s] * x;
  }
  const double lc = p.ac + spatial + tp.zt;
  const double denom = 1.0 + lc;
  if (!(std::abs(denom) > in.guard)) {
    out = std::numeric_limits<double>::quiet_NaN();
    return CellOutcome::singular;
  }
  const double v = (m - tp.l0) / denom;
  if (v < 0.0) {
    out = 0.0;
    return CellOutcome::clamped;
  }
  out = v;
  return CellOutcome::ok;
}

}  // namespace

CorrectionTally correct_cells_serial(const CorrectionInput& in,
                                     std::span<double> out) {
  const TemporalPart tp = temporal_part(in);
  CorrectionTally tally;
  for (std::size_t c = 0; c < in.raw.size(); ++c) {
    switch (correct_one(in, tp, c, out[c])) {
      case CellOutcome::clamped: ++tally.clamped; break;
      case CellOutcome::nodata: ++tally.nodata; break;
      case CellOutcome::singular:
        if (!tally.singular) tally.singular = c;
        break;
      case CellOutcome::ok: break;
    }
  }
  return tally;
}

CorrectionTally correct_cells_omp(const CorrectionInput& in,
                                  std::span<double> out) {
  const TemporalPart tp = temporal_part(in);
  const auto n = static_cast<std::ptrdiff_t>(in.raw.size());
  std::size_t clamped = 0;
  std::size_t nodata = 0;
  std::size_t first_singular = std::numeric_limits<std::size_t>::max();

#pragma omp parallel for schedule(static) reduction(+ : clamped, nodata) \
    reduction(min : first_singular)
  for (std::ptrdiff_t c = 0; c < n; ++c) {
    const auto cell = static_cast<std::size_t>(c);
    switch (correct_one(in, tp, cell, out[cell])) {
      case CellOutcome::clamped: ++clamped; break;
      case CellOutcome::nodata: ++nodata; break;
      case CellOutcome::singular:
        first_singular = std::min(first_singular, cell);
        break;
      case CellOutcome::ok: break;
    }
  }

  CorrectionTally tally{clamped, nodata, std::nullopt};
  if (first_singular != std::numeric_limits<std::size_t>::max())
    tally.singular = first_singular;
  return tally;
}

}  // namespace aqbias::kernels
