#include "aqbias/validation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <exception>
#include <limits>
#include <map>
#include <numeric>
#include <random>
#include <sstream>

#include "aqbias/csv.hpp"
#include "aqbias/error.hpp"
#include "aqbias/measurement.hpp"

namespace aqbias {

ScoreReport scores(std::span<const double> predictions, std::span<const double> measurements) {
  if (predictions.size() != measurements.size())
    throw ConfigError("predictions and measurements differ in length");
  const std::size_t n = measurements.size();
  if (n < 2) throw DataError("scores need at least two aligned values");
  double mean = 0.0;
  for (double z : measurements) mean += z;
  mean /= static_cast<double>(n);
  double ss_tot = 0.0, ss_res = 0.0, abs_sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double r = predictions[i] - measurements[i];
    const double c = measurements[i] - mean;
    ss_res += r * r;
    ss_tot += c * c;
    abs_sum += std::abs(r);
  }
  if (!(ss_tot > 0.0)) throw DataError("measurements have zero variance: EV is undefined");
  ScoreReport s;
  s.n = n;
  s.ev = 100.0 * (1.0 - ss_res / ss_tot);
  s.mae = abs_sum / static_cast<double>(n);
  s.rmse = std::sqrt(ss_res / static_cast<double>(n));
  return s;
}

TrainTestSplit split_train_test(const std::vector<std::uint8_t>& eligible, double fraction,
                                std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction <= 1.0))
    throw ConfigError("training fraction must lie in (0, 1]");
  std::vector<std::size_t> idx;
  for (std::size_t t = 0; t < eligible.size(); ++t)
    if (eligible[t]) idx.push_back(t);
  const std::size_t n = idx.size();
  if (n < 10) throw DataError("fewer than 10 eligible hours to split");
  const auto n_train = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n)));
  if (n_train >= n) throw DataError("training fraction leaves an empty test set");

  std::seed_seq seq{static_cast<std::uint32_t>(seed & 0xffffffffu),
                    static_cast<std::uint32_t>(seed >> 32), 0x5e1u};
  std::mt19937_64 rng(seq);
  // Partial Fisher-Yates with an explicit unbiased draw, so the split does
  // not depend on the standard library's distribution implementations.
  for (std::size_t i = 0; i < n_train; ++i) {
    const std::uint64_t span = n - i;
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                                std::numeric_limits<std::uint64_t>::max() % span;
    std::uint64_t u;
    do u = rng(); while (u >= limit);
    std::swap(idx[i], idx[i + static_cast<std::size_t>(u % span)]);
  }
  TrainTestSplit out;
  out.train.assign(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_train));
  out.test.assign(idx.begin() + static_cast<std::ptrdiff_t>(n_train), idx.end());
  std::sort(out.train.begin(), out.train.end());
  std::sort(out.test.begin(), out.test.end());
  return out;
}

const char* to_string(FitMode m) { return m == FitMode::S ? "S" : "S+LCS"; }

FitMode parse_fit_mode(const std::string& text) {
  if (text == "S") return FitMode::S;
  if (text == "S+LCS") return FitMode::S_LCS;
  throw ConfigError("mode must be S or S+LCS, got '" + text + "'");
}

const char* to_string(FitMethod m) { return m == FitMethod::gibbs ? "gibbs" : "gls"; }

FitMethod parse_fit_method(const std::string& text) {
  if (text == "gibbs") return FitMethod::gibbs;
  if (text == "gls") return FitMethod::gls;
  throw ConfigError("sampler must be gibbs or gls, got '" + text + "'");
}

FitResult fit_observations(const ObservationSet& obs, const std::vector<std::size_t>& hours,
                           const FitOptions& opt) {
  std::vector<RegressionRow> rows = build_rows(obs.subset_hours(hours)).rows;
  FitResult out;
  std::vector<RegressionRow> kept;
  kept.reserve(rows.size());
  for (auto& r : rows) {
    if (r.kind == DeviceKind::sensor) {
      if (opt.mode == FitMode::S) {
        ++out.dropped_rows;
        continue;
      }
      ++out.sensor_rows;
    } else {
      ++out.station_rows;
    }
    kept.push_back(std::move(r));
  }
  if (out.station_rows == 0) throw DataError("no complete station rows to fit on");

  if (opt.method == FitMethod::gls) {
    if (out.sensor_rows > 0)
      throw ConfigError("the GLS estimator is station-only; use mode S or the gibbs sampler");
    out.gls = gls_fit(kept, obs.layout, opt.gls);
    out.bias = out.gls->params;
    return out;
  }

  const PriorSpec priors = opt.priors ? *opt.priors : default_priors(obs.layout, obs.channel_names);
  std::optional<std::vector<double>> init;
  if (opt.collocation) {
    const ParameterLayout layout = layout_for_rows(kept, obs.layout, obs.channel_names);
    init = init_from_collocation(layout, priors.expand(layout), *opt.collocation);
    const auto base = default_start(kept, priors, opt.sampler.guard);
    std::copy(base.begin(), base.begin() + static_cast<std::ptrdiff_t>(layout.bias_size()),
              init->begin());
  }
  out.chains = gibbs_fit(kept, priors, opt.sampler, init);
  PosteriorEstimate est = posterior_estimate(*out.chains, opt.estimate);
  out.bias = std::move(est.bias);
  out.sensors = std::move(est.sensors);
  return out;
}

DeviceSeriesScore correct_at_device(const ObservationSet& obs, std::size_t device,
                                    const std::vector<std::size_t>& hours,
                                    const BiasParameters& p, double guard) {
  const DeviceSeries& d = obs.devices.at(device);
  const std::size_t l = obs.layout.l();
  DeviceSeriesScore out;
  for (std::size_t t : hours) {
    if (!d.mask.at(t)) continue;
    const std::span<const double> xt(obs.xt.data() + t * l, l);
    const double l0 = eval_l0(p, xt), lc = eval_lc(p, d.xs, xt);
    Inversion inv;
    try {
      inv = invert_to_concentration(d.m[t], l0, lc, guard);
    } catch (const SingularCorrectionError& e) {
      throw SingularCorrectionError(d.id + " at " + format_hour(obs.hours[t]) + ": " + e.what());
    }
    out.hours.push_back(t);
    out.measured.push_back(d.z[t]);
    out.raw.push_back(d.m[t]);
    out.corrected.push_back(inv.value);
    out.clamped += inv.clamped ? 1 : 0;
  }
  return out;
}

LooResult loo_station_cv(const ObservationSet& obs, const LooOptions& opt) {
  std::vector<std::size_t> stations;
  for (std::size_t d = 0; d < obs.devices.size(); ++d)
    if (obs.devices[d].kind == DeviceKind::station) stations.push_back(d);
  if (stations.size() < 2) throw DataError("leave-one-out needs at least two stations");

  std::vector<std::size_t> all(obs.n_hours());
  std::iota(all.begin(), all.end(), std::size_t{0});
  const auto& fit_hours = opt.fit_hours.empty() ? all : opt.fit_hours;
  const auto& eval_hours = opt.eval_hours.empty() ? all : opt.eval_hours;
  const double guard = opt.fit.sampler.guard;

  const std::size_t nf = stations.size();
  LooResult res;
  res.fold_bias.resize(nf);
  res.series.resize(nf);
  std::vector<std::exception_ptr> errors(nf);
  const auto n_folds = static_cast<std::ptrdiff_t>(nf);
#pragma omp parallel for schedule(dynamic, 1)
  for (std::ptrdiff_t fi = 0; fi < n_folds; ++fi) {
    const auto f = static_cast<std::size_t>(fi);
    try {
      BiasParameters bias;
      if (opt.fixed) {
        bias = *opt.fixed;
      } else {
        ObservationSet fold = obs;
        fold.devices.erase(fold.devices.begin() + static_cast<std::ptrdiff_t>(stations[f]));
        bias = fit_observations(fold, fit_hours, opt.fit).bias;
      }
      res.series[f] = correct_at_device(obs, stations[f], eval_hours, bias, guard);
      res.fold_bias[f] = std::move(bias);
    } catch (...) {
      errors[f] = std::current_exception();
    }
  }
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);

  const std::string label = opt.fixed ? "fixed" : to_string(opt.fit.mode);
  std::vector<double> meas, raw, corr;
  for (std::size_t f = 0; f < nf; ++f) {
    const auto& s = res.series[f];
    const std::string& id = obs.devices[stations[f]].id;
    res.stations.push_back(id);
    ScoreReport r = scores(s.raw, s.measured);
    r.scope = "loo";
    r.model = "raw";
    r.device = id;
    res.raw.push_back(r);
    ScoreReport c = scores(s.corrected, s.measured);
    c.scope = "loo";
    c.model = label;
    c.device = id;
    res.corrected.push_back(c);
    meas.insert(meas.end(), s.measured.begin(), s.measured.end());
    raw.insert(raw.end(), s.raw.begin(), s.raw.end());
    corr.insert(corr.end(), s.corrected.begin(), s.corrected.end());
  }
  res.raw_pooled = scores(raw, meas);
  res.raw_pooled.scope = "loo";
  res.raw_pooled.model = "raw";
  res.corrected_pooled = scores(corr, meas);
  res.corrected_pooled.scope = "loo";
  res.corrected_pooled.model = label;
  return res;
}

std::vector<DiurnalRow> diurnal_profile(const ObservationSet& obs,
                                        const std::vector<std::vector<double>>& corrected,
                                        const std::vector<std::uint8_t>& scope) {
  if (scope.size() != obs.n_hours()) throw ConfigError("scope mask does not match the time axis");
  if (corrected.size() != obs.devices.size())
    throw ConfigError("need one corrected series per device");
  if (std::none_of(scope.begin(), scope.end(), [](auto v) { return v != 0; }))
    throw DataError("diurnal profile scope is empty");
  std::vector<DiurnalRow> out;
  for (std::size_t d = 0; d < obs.devices.size(); ++d) {
    const DeviceSeries& dev = obs.devices[d];
    if (dev.kind != DeviceKind::station) continue;
    if (corrected[d].size() != obs.n_hours())
      throw ConfigError("corrected series of " + dev.id + " does not match the time axis");
    DiurnalRow acc[24];
    for (int h = 0; h < 24; ++h) {
      acc[h].device = dev.id;
      acc[h].hour_of_day = h;
    }
    for (std::size_t t = 0; t < obs.n_hours(); ++t) {
      if (!scope[t]) continue;
      const double z = dev.z[t], m = dev.m[t], c = corrected[d][t];
      if (!std::isfinite(z) || !std::isfinite(m) || !std::isfinite(c)) continue;
      DiurnalRow& r = acc[hour_of_day(obs.hours[t])];
      ++r.n;
      r.measured += z;
      r.raw += m;
      r.corrected += c;
    }
    for (auto& r : acc) {
      if (r.n == 0) continue;
      const double n = static_cast<double>(r.n);
      r.measured /= n;
      r.raw /= n;
      r.corrected /= n;
      out.push_back(r);
    }
  }
  return out;
}

std::string scores_csv(const std::vector<ScoreReport>& reports) {
  std::ostringstream out;
  out << "scope,model,device,n,ev,mae,rmse\n";
  for (const auto& r : reports)
    out << r.scope << ',' << r.model << ',' << r.device << ',' << r.n << ','
        << csv::format_double(r.ev) << ',' << csv::format_double(r.mae) << ','
        << csv::format_double(r.rmse) << '\n';
  return out.str();
}

std::string diurnal_csv(const std::vector<DiurnalRow>& rows) {
  std::ostringstream out;
  out << "device,hour,n,measured,raw,corrected\n";
  for (const auto& r : rows)
    out << r.device << ',' << r.hour_of_day << ',' << r.n << ',' << csv::format_double(r.measured)
        << ',' << csv::format_double(r.raw) << ',' << csv::format_double(r.corrected) << '\n';
  return out.str();
}

std::string summary_table(const std::vector<ScoreReport>& reports) {
  std::vector<std::string> models, scopes;
  for (const auto& r : reports) {
    if (std::find(models.begin(), models.end(), r.model) == models.end()) models.push_back(r.model);
    if (std::find(scopes.begin(), scopes.end(), r.scope) == scopes.end()) scopes.push_back(r.scope);
  }
  auto label = [](const std::string& m) {
    if (m == "raw") return std::string("Raw model");
    if (m == "S" || m == "S+LCS") return "Correction (" + m + ")";
    return m;
  };
  std::ostringstream out;
  char buf[128];
  std::snprintf(buf, sizeof buf, "%-20s", "");
  out << buf;
  for (const auto& s : scopes) {
    std::snprintf(buf, sizeof buf, " | %-24s", s.c_str());
    out << buf;
  }
  out << '\n';
  std::snprintf(buf, sizeof buf, "%-20s", "Model");
  out << buf;
  for (std::size_t i = 0; i < scopes.size(); ++i) {
    std::snprintf(buf, sizeof buf, " | %7s %7s %8s", "EV(%)", "MAE", "RMSE");
    out << buf;
  }
  out << '\n';
  for (const auto& m : models) {
    std::snprintf(buf, sizeof buf, "%-20s", label(m).c_str());
    out << buf;
    for (const auto& s : scopes) {
      const auto it = std::find_if(reports.begin(), reports.end(),
                                   [&](const auto& r) { return r.model == m && r.scope == s; });
      if (it == reports.end()) {
        std::snprintf(buf, sizeof buf, " | %7s %7s %8s", "-", "-", "-");
      } else {
        std::snprintf(buf, sizeof buf, " | %7.1f %7.2f %8.2f", it->ev, it->mae, it->rmse);
      }
      out << buf;
    }
    out << '\n';
  }
  return out.str();
}

}  // namespace aqbias
