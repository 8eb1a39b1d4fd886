#include "aqbias/measurement.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include "aqbias/error.hpp"

namespace aqbias {

namespace {

constexpr double kHalfLog2Pi = 0.91893853320467274178;  // log(sqrt(2 pi))

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double normal_logpdf(double x, double mean, double sd) {
  const double r = (x - mean) / sd;
  return -std::log(sd) - kHalfLog2Pi - 0.5 * r * r;
}

}  // namespace

SensorCalibration SensorCalibration::station(std::size_t q, double sigma0) {
  SensorCalibration c;
  c.sensor_id = "";
  c.alpha = 1.0;
  c.beta = 0.0;
  c.gamma.assign(q, 0.0);
  c.sigma = sigma0;
  return c;
}

void SensorCalibration::validate(std::size_t q) const {
  if (gamma.size() != q)
    throw ConfigError("sensor " + sensor_id + ": gamma has length " +
                      std::to_string(gamma.size()) + ", expected " +
                      std::to_string(q));
  bool finite = std::isfinite(alpha) && std::isfinite(beta) &&
                std::isfinite(sigma);
  for (double g : gamma) finite = finite && std::isfinite(g);
  if (!finite) throw ConfigError("sensor " + sensor_id + ": non-finite value");
  if (!(alpha < 0.0))
    throw ConfigError("sensor " + sensor_id + ": alpha must be negative");
  if (!(sigma > 0.0))
    throw ConfigError("sensor " + sensor_id + ": sigma must be positive");
}

double sensor_forward(const SensorCalibration& cal, double c,
                      std::span<const double> y) {
  if (y.size() != cal.gamma.size())
    throw ConfigError("sensor covariates have length " +
                      std::to_string(y.size()) + ", expected " +
                      std::to_string(cal.gamma.size()));
  return cal.beta + cal.alpha * c + dot(cal.gamma, y);
}

double sensor_invert(const SensorCalibration& cal, double z,
                     std::span<const double> y) {
  if (cal.alpha == 0.0)
    throw DataError("degenerate calibration for sensor " + cal.sensor_id +
                    ": alpha = 0");
  if (y.size() != cal.gamma.size())
    throw ConfigError("sensor covariates have length " +
                      std::to_string(y.size()) + ", expected " +
                      std::to_string(cal.gamma.size()));
  return (z - cal.beta - dot(cal.gamma, y)) / cal.alpha;
}

RowSet build_rows(const ObservationSet& obs) {
  RowSet out;
  const std::size_t nq = obs.q();
  std::vector<const DeviceSeries*> order;
  for (const auto& d : obs.devices) order.push_back(&d);
  std::sort(order.begin(), order.end(),
            [](auto* a, auto* b) { return a->id < b->id; });
  const std::size_t l = obs.layout.l();
  for (const DeviceSeries* d : order) {
    for (std::size_t t = 0; t < obs.n_hours(); ++t) {
      bool ok = std::isfinite(d->z[t]) && std::isfinite(d->m[t]);
      if (d->kind == DeviceKind::sensor)
        for (std::size_t c = 0; c < nq && ok; ++c)
          ok = std::isfinite(d->channels[t * nq + c]);
      if (!d->mask.empty()) ok = ok && d->mask[t] != 0;
      for (double v : d->xs) ok = ok && std::isfinite(v);
      for (std::size_t i = 0; i < l && ok; ++i) ok = std::isfinite(obs.xt[t * l + i]);
      if (!ok) {
        ++out.skipped;
        continue;
      }
      RegressionRow r;
      r.device_id = d->id;
      r.kind = d->kind;
      r.hour = obs.hours[t];
      r.m = d->m[t];
      r.z = d->z[t];
      if (d->kind == DeviceKind::sensor)
        r.y.assign(d->channels.begin() + static_cast<std::ptrdiff_t>(t * nq),
                   d->channels.begin() + static_cast<std::ptrdiff_t>((t + 1) * nq));
      r.xs = d->xs;
      r.xt.assign(obs.xt.begin() + static_cast<std::ptrdiff_t>(t * l),
                  obs.xt.begin() + static_cast<std::ptrdiff_t>((t + 1) * l));
      out.rows.push_back(std::move(r));
    }
  }
  return out;
}

const char* to_string(LikelihoodForm f) {
  switch (f) {
    case LikelihoodForm::measurement: return "measurement";
    case LikelihoodForm::model: return "model";
    case LikelihoodForm::model_literal: return "model-literal";
  }
  return "?";
}

LikelihoodForm parse_likelihood_form(const std::string& text) {
  if (text == "measurement") return LikelihoodForm::measurement;
  if (text == "model") return LikelihoodForm::model;
  if (text == "model-literal") return LikelihoodForm::model_literal;
  throw ConfigError("unknown likelihood form '" + text + "'");
}

double loglik_row(const RegressionRow& row, const BiasParameters& p,
                  const SensorCalibration& cal, LikelihoodForm form,
                  double guard) {
  const double l0 = eval_l0(p, row.xt);
  const double lc = eval_lc(p, row.xs, row.xt);
  const double s = 1.0 + lc;
  if (!(std::abs(s) > guard)) {
    std::ostringstream os;
    os << "singular 1 + Lc at device " << row.device_id << " time "
       << format_hour(row.hour);
    throw SingularCorrectionError(os.str());
  }
  const std::span<const double> y =
      row.y.empty() ? std::span<const double>(cal.gamma.data(), 0)
                    : std::span<const double>(row.y);
  const std::span<const double> g =
      row.y.empty() ? std::span<const double>(cal.gamma.data(), 0)
                    : std::span<const double>(cal.gamma);
  if (!row.y.empty() && row.y.size() != cal.gamma.size())
    throw ConfigError("row covariates do not match calibration length");
  const double gy = dot(g, y);
  switch (form) {
    case LikelihoodForm::measurement: {
      const double c_hat = (row.m - l0) / s;
      return normal_logpdf(row.z, cal.beta + cal.alpha * c_hat + gy, cal.sigma);
    }
    case LikelihoodForm::model: {
      const double u = (row.z - cal.beta - gy) / cal.alpha;
      return normal_logpdf(row.m, l0 + u * s,
                           std::abs(s) * cal.sigma / std::abs(cal.alpha));
    }
    case LikelihoodForm::model_literal: {
      const double u = (row.z - cal.beta - gy) / cal.alpha;
      return normal_logpdf(row.m, l0 + u * s, std::abs(s) * cal.sigma);
    }
  }
  return 0.0;
}

double loglik_station_row(const RegressionRow& row, const BiasParameters& p,
                          double guard) {
  const double l0 = eval_l0(p, row.xt);
  const double s = 1.0 + eval_lc(p, row.xs, row.xt);
  if (!(std::abs(s) > guard))
    throw SingularCorrectionError("singular 1 + Lc at station " +
                                  row.device_id);
  return normal_logpdf(row.m, l0 + row.z * s, std::abs(s) * p.sigma0);
}

RowTable::RowTable(std::vector<RegressionRow> rows, std::size_t k,
                   std::size_t l, std::size_t q)
    : k_(k), l_(l), q_(q) {
  std::stable_sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) {
    if (a.device_id != b.device_id) return a.device_id < b.device_id;
    return a.hour < b.hour;
  });
  const std::size_t n = rows.size();
  m_.resize(n);
  z_.resize(n);
  xs_.resize(n * k);
  xt_.resize(n * l);
  y_.assign(n * q, 0.0);
  for (std::size_t r = 0; r < n; ++r) {
    const auto& row = rows[r];
    if (row.xs.size() != k || row.xt.size() != l)
      throw ConfigError("row for device " + row.device_id +
                        " has covariate lengths inconsistent with k, l");
    if (row.kind == DeviceKind::sensor && row.y.size() != q)
      throw ConfigError("sensor row for " + row.device_id + " has " +
                        std::to_string(row.y.size()) + " channels, expected " +
                        std::to_string(q));
    m_[r] = row.m;
    z_[r] = row.z;
    std::copy(row.xs.begin(), row.xs.end(), xs_.begin() + static_cast<std::ptrdiff_t>(r * k));
    std::copy(row.xt.begin(), row.xt.end(), xt_.begin() + static_cast<std::ptrdiff_t>(r * l));
    std::copy(row.y.begin(), row.y.end(), y_.begin() + static_cast<std::ptrdiff_t>(r * q));
    if (segments_.empty() || segments_.back().device_id != row.device_id) {
      if (!segments_.empty()) segments_.back().end = r;
      Segment s;
      s.device_id = row.device_id;
      s.kind = row.kind;
      s.begin = r;
      segments_.push_back(s);
    } else if (segments_.back().kind != row.kind) {
      throw ConfigError("device " + row.device_id + " has mixed kinds");
    }
  }
  if (!segments_.empty()) segments_.back().end = n;
  for (std::size_t s = 0; s < segments_.size(); ++s) {
    auto& seg = segments_[s];
    seg.first_block = blocks_.size();
    for (std::size_t b = seg.begin; b < seg.end; b += kBlock)
      blocks_.push_back({s, b, std::min(seg.end, b + kBlock)});
    seg.last_block = blocks_.size();
  }
}

}  // namespace aqbias
