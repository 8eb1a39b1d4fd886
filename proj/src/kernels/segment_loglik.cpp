// Per-segment log-likelihood sums over a RowTable. Both entry points
// evaluate the same fixed blocks and combine block partials in block
// order, so their results are bit-identical.

#include <cmath>
#include <limits>
#include <vector>

#include <omp.h>

#include "aqbias/measurement.hpp"

namespace aqbias::kernels {

namespace {

constexpr double kHalfLog2Pi = 0.91893853320467274178;
constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double block_loglik(const LoglikRequest& req, const RowTable::Block& b) {
  const RowTable& t = *req.table;
  const BiasParameters& p = *req.bias;
  const CalibrationView& cal = req.calibrations[b.segment];
  const std::size_t k = t.k(), l = t.l(), q = t.q();

  double acc = 0.0;
  for (std::size_t r = b.begin; r < b.end; ++r) {
    const double* xs = t.xs(r);
    const double* xt = t.xt(r);
    double th = 0.0, zs = 0.0, zt = 0.0;
    for (std::size_t i = 0; i < l; ++i) th += p.thetaT[i] * xt[i];
    for (std::size_t i = 0; i < k; ++i) zs += p.zetaS[i] * xs[i];
    for (std::size_t i = 0; i < l; ++i) zt += p.zetaT[i] * xt[i];
    const double l0 = p.a0 + th;
    const double s = 1.0 + (p.ac + zs + zt);
    if (!(std::abs(s) > req.guard)) return kNegInf;

    double gy = 0.0;
    if (cal.gamma != nullptr) {
      const double* y = t.y(r);
      for (std::size_t i = 0; i < q; ++i) gy += cal.gamma[i] * y[i];
    }

    switch (req.form) {
      case LikelihoodForm::measurement: {
        const double c_hat = (t.m(r) - l0) / s;
        const double res = (t.z(r) - (cal.beta + cal.alpha * c_hat + gy)) / cal.sigma;
        acc += -0.5 * res * res;
        break;
      }
      case LikelihoodForm::model: {
        const double u = (t.z(r) - cal.beta - gy) / cal.alpha;
        const double sd = std::abs(s) * cal.sigma / std::abs(cal.alpha);
        const double res = (t.m(r) - (l0 + u * s)) / sd;
        acc += -0.5 * res * res - std::log(std::abs(s));
        break;
      }
      case LikelihoodForm::model_literal: {
        const double u = (t.z(r) - cal.beta - gy) / cal.alpha;
        const double sd = std::abs(s) * cal.sigma;
        const double res = (t.m(r) - (l0 + u * s)) / sd;
        acc += -0.5 * res * res - std::log(std::abs(s));
        break;
      }
    }
  }

  double per_row = -std::log(cal.sigma) - kHalfLog2Pi;
  if (req.form == LikelihoodForm::model) per_row += std::log(std::abs(cal.alpha));
  return acc + static_cast<double>(b.end - b.begin) * per_row;
}

double combine(const std::vector<double>& partials, std::size_t first,
               std::size_t last) {
  double total = 0.0;
  for (std::size_t b = first; b < last; ++b) total += partials[b];
  return total;
}

}  // namespace

void segment_loglik_serial(const LoglikRequest& req,
                           std::span<const std::size_t> segs,
                           std::span<double> out) {
  const auto& segments = req.table->segments();
  const auto& blocks = req.table->blocks();
  for (std::size_t i = 0; i < segs.size(); ++i) {
    const auto& seg = segments[segs[i]];
    double total = 0.0;
    for (std::size_t b = seg.first_block; b < seg.last_block; ++b)
      total += block_loglik(req, blocks[b]);
    out[i] = total;
  }
}

void segment_loglik_omp(const LoglikRequest& req,
                        std::span<const std::size_t> segs,
                        std::span<double> out) {
  const auto& segments = req.table->segments();
  const auto& blocks = req.table->blocks();

  std::vector<std::size_t> work;
  for (std::size_t s : segs)
    for (std::size_t b = segments[s].first_block; b < segments[s].last_block; ++b)
      work.push_back(b);

  // Not worth a parallel region for a handful of blocks, or when already
  // inside one (chains running concurrently).
  if (work.size() < 4 || omp_in_parallel() || omp_get_max_threads() == 1) {
    segment_loglik_serial(req, segs, out);
    return;
  }

  std::vector<double> partials(blocks.size(), 0.0);
  const auto n = static_cast<std::ptrdiff_t>(work.size());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t w = 0; w < n; ++w) {
    const std::size_t b = work[static_cast<std::size_t>(w)];
    partials[b] = block_loglik(req, blocks[b]);
  }

  for (std::size_t i = 0; i < segs.size(); ++i) {
    const auto& seg = segments[segs[i]];
    out[i] = combine(partials, seg.first_block, seg.last_block);
  }
}

}  // namespace aqbias::kernels
