#include "aqbias/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <limits>
#include <set>
#include <span>

#include "aqbias/error.hpp"
#include "aqbias/params_io.hpp"

namespace aqbias {

namespace {

using nlohmann::json;

std::mt19937_64 stream(std::uint64_t seed, std::uint32_t id) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed & 0xffffffffu),
                    static_cast<std::uint32_t>(seed >> 32), id};
  return std::mt19937_64(seq);
}

double gauss(std::mt19937_64& rng) { return std::normal_distribution<double>(0.0, 1.0)(rng); }
double uniform(std::mt19937_64& rng, double a, double b) {
  return std::uniform_real_distribution<double>(a, b)(rng);
}

enum StreamId : std::uint32_t { kSpatial = 1, kTemporal = 2, kPlacement = 3, kDevice = 100 };

// Spatial layers, indexed like layout.spatial: roads-like, green-like,
// elevation-like, then generic smooth fields.
std::vector<std::vector<double>> spatial_layers(const SynthSpec& spec,
                                                std::vector<double>& level) {
  const GridGeometry& g = spec.geometry;
  auto rng = stream(spec.seed, kSpatial);
  const double w = g.cell_size * static_cast<double>(g.nx);
  const double h = g.cell_size * static_cast<double>(g.ny);

  struct Line { bool horizontal; double pos; };
  std::vector<Line> roads;
  for (int i = 0; i < 3; ++i) roads.push_back({true, g.origin_y + uniform(rng, 0.1, 0.9) * h});
  for (int i = 0; i < 2; ++i) roads.push_back({false, g.origin_x + uniform(rng, 0.1, 0.9) * w});

  struct Blob { double x, y, r; };
  std::vector<Blob> parks;
  for (int i = 0; i < 4; ++i)
    parks.push_back({g.origin_x + uniform(rng, 0.0, 1.0) * w,
                     g.origin_y + uniform(rng, 0.0, 1.0) * h, uniform(rng, 40.0, 90.0)});
  const double hill_x = g.origin_x + uniform(rng, 0.2, 0.8) * w;
  const double hill_y = g.origin_y + uniform(rng, 0.2, 0.8) * h;

  // Coarse lattice of N(0,1) values smoothed with a squared-exponential
  // kernel; one lattice per generic layer plus one for the level.
  const std::size_t extra = spec.layout.k() > 3 ? spec.layout.k() - 3 : 0;
  const int lattice = 5;
  std::vector<std::vector<double>> nodes(extra + 1, std::vector<double>(lattice * lattice));
  for (auto& v : nodes)
    for (double& x : v) x = gauss(rng);
  const double ell = spec.field.spatial_length;
  auto smooth = [&](const std::vector<double>& v, double x, double y) {
    double num = 0.0, den = 0.0;
    for (int a = 0; a < lattice; ++a)
      for (int b = 0; b < lattice; ++b) {
        const double nx = g.origin_x + w * (a + 0.5) / lattice;
        const double ny = g.origin_y + h * (b + 0.5) / lattice;
        const double d2 = (x - nx) * (x - nx) + (y - ny) * (y - ny);
        const double k = std::exp(-0.5 * d2 / (ell * ell));
        num += k * v[a * lattice + b];
        den += k;
      }
    return num / den;
  };

  const std::size_t n = g.size();
  std::vector<std::vector<double>> layers(spec.layout.k(), std::vector<double>(n));
  level.assign(n, 0.0);
  for (std::size_t j = 0; j < g.ny; ++j)
    for (std::size_t i = 0; i < g.nx; ++i) {
      const std::size_t c = g.index(i, j);
      const double x = g.center_x(i), y = g.center_y(j);
      double road = 0.0;
      for (const auto& r : roads) {
        const double d = r.horizontal ? y - r.pos : x - r.pos;
        road += 0.6 * std::exp(-0.5 * d * d / (25.0 * 25.0));
      }
      road = std::min(road, 0.6);
      double green = 0.0;
      for (const auto& p : parks) {
        const double d2 = (x - p.x) * (x - p.x) + (y - p.y) * (y - p.y);
        green = std::max(green, 0.6 * std::exp(-0.5 * d2 / (p.r * p.r)));
      }
      green *= 1.0 - road / 0.6;
      const double hd2 = (x - hill_x) * (x - hill_x) + (y - hill_y) * (y - hill_y);
      const double elev = 15.0 + 55.0 * (x - g.origin_x) / w + 30.0 * std::exp(-0.5 * hd2 / (150.0 * 150.0));
      const double base[3] = {road, green, elev};
      for (std::size_t s = 0; s < spec.layout.k(); ++s)
        layers[s][c] = s < 3 ? base[s] : smooth(nodes[s - 3 + 1], x, y);

      const auto& f = spec.field;
      level[c] = f.base_level * (1.0 + f.road_gain * road / 0.6 - f.green_loss * green / 0.6) *
                 std::exp(f.spatial_sd * smooth(nodes[0], x, y));
    }
  return layers;
}

double diurnal(const LatentField& f, int hod) {
  const double m = hod - 8.0, e = hod - 17.0;
  return f.diurnal_floor + f.morning_peak * std::exp(-0.5 * m * m / 2.25) +
         f.evening_peak * std::exp(-0.5 * e * e / 2.25);
}

// Sensor-side channel recipe keyed by name.
double channel_value(const std::string& name, double c, double temperature, double rh_day,
                     std::mt19937_64& rng) {
  if (name == "NO") return 150.0 + 0.5 * c + 60.0 * gauss(rng);
  if (name == "CO") return 400.0 + 0.4 * c + 60.0 * gauss(rng);
  if (name == "Ox") return 300.0 - 0.5 * c + 60.0 * gauss(rng);
  if (name == "RH") return std::clamp(75.0 + 8.0 * rh_day + 5.0 * gauss(rng), 20.0, 100.0);
  if (name == "T") return temperature + gauss(rng);
  return 100.0 + 0.5 * c + 50.0 * gauss(rng);
}

json geometry_to_json(const GridGeometry& g) {
  return {{"origin_x", g.origin_x}, {"origin_y", g.origin_y}, {"cell_size", g.cell_size},
          {"nx", g.nx}, {"ny", g.ny}};
}

GridGeometry geometry_from_json(const json& j) {
  GridGeometry g;
  g.origin_x = j.at("origin_x").get<double>();
  g.origin_y = j.at("origin_y").get<double>();
  g.cell_size = j.at("cell_size").get<double>();
  g.nx = j.at("nx").get<std::size_t>();
  g.ny = j.at("ny").get<std::size_t>();
  return g;
}

}  // namespace

SynthSpec SynthSpec::defaults() {
  SynthSpec s;
  s.start = to_hour({2022, 12, 1, 0});
  s.bias.a0 = -1.9;
  s.bias.ac = -0.6;
  s.bias.thetaT = {-4.0, -0.002};
  s.bias.zetaS = {-0.25, 0.30, 0.004};
  s.bias.zetaT = {0.3, 0.002};
  s.bias.sigma0 = 15.0;
  // beta, alpha, gamma (NO, CO, Ox, RH, T) in the spirit of deployed
  // low-cost sensors.
  const struct { const char* id; double beta, alpha, g[5]; } table[] = {
      {"ASE4", 25728.71, -1.58, {0.00, -0.06, 0.21, -1.68, -4.33}},
      {"ASE5", 26998.27, -1.60, {-0.07, -0.04, 0.24, -1.35, -2.04}},
      {"ASE6", 27083.11, -1.36, {-0.07, -0.03, 0.20, -0.03, -24.48}},
      {"ASE7", 28042.68, -1.07, {-0.07, -0.01, 0.16, -0.95, 2.97}},
      {"ASE8", 24003.27, -2.22, {-0.10, -0.01, 0.33, -1.43, -8.50}},
      {"ASE9", 23561.47, -2.49, {-0.10, 0.00, 0.32, -1.48, -29.70}},
      {"ASE10", 25990.97, -1.37, {-0.07, -0.02, 0.25, -1.39, -10.64}},
      {"ASE11", 27646.75, -1.21, {-0.08, -0.02, 0.19, -1.34, -23.69}},
      {"ASE12", 27241.07, -1.39, {-0.07, -0.02, 0.20, -1.93, 2.31}},
      {"ASE13", 24870.06, -1.78, {-0.04, -0.04, 0.24, -0.87, -33.86}},
  };
  for (const auto& r : table) {
    SensorCalibration c;
    c.sensor_id = r.id;
    c.beta = r.beta;
    c.alpha = r.alpha;
    c.gamma.assign(r.g, r.g + 5);
    c.sigma = 30.0;
    s.sensors.push_back(c);
  }
  s.seed = 20221201;
  return s;
}

const char* to_string(StationSite s) {
  switch (s) {
    case StationSite::traffic: return "traffic";
    case StationSite::background: return "background";
    case StationSite::park: return "park";
    case StationSite::open: return "open";
    case StationSite::any: return "any";
  }
  return "any";
}

StationSite parse_station_site(const std::string& text) {
  for (auto s : {StationSite::traffic, StationSite::background, StationSite::park,
                 StationSite::open, StationSite::any})
    if (text == to_string(s)) return s;
  throw ConfigError("unknown station site '" + text +
                    "' (expected traffic, background, park, open or any)");
}

void SynthSpec::validate() const {
  if (n_stations < 1) throw ConfigError("synthetic campaign needs at least one station");
  if (n_hours < 1) throw ConfigError("synthetic campaign needs at least one hour");
  if (!station_sites.empty() && station_sites.size() != n_stations)
    throw ConfigError("station_sites needs one entry per station");
  for (auto site : station_sites)
    if ((site == StationSite::park || site == StationSite::open) && layout.k() < 2)
      throw ConfigError("park and open station sites need a green cover layer");
  if (!(geometry.cell_size > 0.0) || geometry.nx == 0 || geometry.ny == 0)
    throw ConfigError("synthetic grid geometry is empty");
  if (n_stations + sensors.size() > geometry.size())
    throw ConfigError("more devices than grid cells");
  if (bias.k() != layout.k() || bias.l() != layout.l())
    throw ConfigError("true bias parameters do not match the covariate layout");
  if (!(bias.sigma0 >= 0.0)) throw ConfigError("true sigma0 must be non-negative");
  if (bias.ac > 0.0) throw ConfigError("true ac must not be positive");
  std::set<std::string> ids;
  for (const auto& s : sensors) {
    if (s.gamma.size() != channels.size())
      throw ConfigError("sensor " + s.sensor_id + ": gamma length differs from the channel count");
    if (!(s.alpha < 0.0)) throw ConfigError("sensor " + s.sensor_id + ": alpha must be negative");
    if (!(s.sigma >= 0.0)) throw ConfigError("sensor " + s.sensor_id + ": sigma must be non-negative");
    if (!ids.insert(s.sensor_id).second) throw ConfigError("duplicate sensor id " + s.sensor_id);
  }
  if (!(missing_rate >= 0.0 && missing_rate < 1.0))
    throw ConfigError("missing_rate must lie in [0, 1)");
  window.validate();
}

json SynthSpec::to_json() const {
  json j;
  j["geometry"] = geometry_to_json(geometry);
  j["spatial_covariates"] = layout.spatial;
  j["temporal_covariates"] = layout.temporal;
  j["channels"] = channels;
  j["n_stations"] = n_stations;
  if (!station_sites.empty()) {
    j["station_sites"] = json::array();
    for (auto site : station_sites) j["station_sites"].push_back(to_string(site));
  }
  j["n_hours"] = n_hours;
  j["start"] = format_hour(start);
  j["traffic_only"] = traffic_only;
  j["traffic_window"] = {{"weekdays", window.weekdays}, {"hours", window.hours}};
  j["bias"] = bias_to_json(bias, layout);
  j["sensors"] = json::array();
  for (const auto& s : sensors) j["sensors"].push_back(calibration_to_json(s, channels));
  const auto& f = field;
  j["field"] = {{"base_level", f.base_level},       {"road_gain", f.road_gain},
                {"green_loss", f.green_loss},       {"spatial_length", f.spatial_length},
                {"spatial_sd", f.spatial_sd},       {"day_sd", f.day_sd},
                {"hour_sd", f.hour_sd},             {"diurnal_floor", f.diurnal_floor},
                {"morning_peak", f.morning_peak},   {"evening_peak", f.evening_peak},
                {"met_gain", f.met_gain}};
  j["missing_rate"] = missing_rate;
  j["seed"] = seed;
  return j;
}

SynthSpec SynthSpec::from_json(const json& j) {
  try {
    SynthSpec s;
    s.geometry = geometry_from_json(j.at("geometry"));
    s.layout.spatial = j.at("spatial_covariates").get<std::vector<std::string>>();
    s.layout.temporal = j.at("temporal_covariates").get<std::vector<std::string>>();
    s.channels = j.at("channels").get<std::vector<std::string>>();
    s.n_stations = j.at("n_stations").get<std::size_t>();
    if (j.contains("station_sites"))
      for (const auto& e : j["station_sites"]) s.station_sites.push_back(parse_station_site(e.get<std::string>()));
    s.n_hours = j.at("n_hours").get<std::size_t>();
    s.start = parse_hour(j.at("start").get<std::string>());
    s.traffic_only = j.value("traffic_only", true);
    if (j.contains("traffic_window")) {
      s.window.weekdays = j["traffic_window"].at("weekdays").get<std::vector<int>>();
      s.window.hours = j["traffic_window"].at("hours").get<std::vector<std::pair<int, int>>>();
    }
    s.bias = bias_from_json(j.at("bias"), s.layout);
    for (const auto& c : j.at("sensors")) s.sensors.push_back(calibration_from_json(c, s.channels));
    if (j.contains("field")) {
      const auto& f = j["field"];
      auto& d = s.field;
      d.base_level = f.value("base_level", d.base_level);
      d.road_gain = f.value("road_gain", d.road_gain);
      d.green_loss = f.value("green_loss", d.green_loss);
      d.spatial_length = f.value("spatial_length", d.spatial_length);
      d.spatial_sd = f.value("spatial_sd", d.spatial_sd);
      d.day_sd = f.value("day_sd", d.day_sd);
      d.hour_sd = f.value("hour_sd", d.hour_sd);
      d.diurnal_floor = f.value("diurnal_floor", d.diurnal_floor);
      d.morning_peak = f.value("morning_peak", d.morning_peak);
      d.evening_peak = f.value("evening_peak", d.evening_peak);
      d.met_gain = f.value("met_gain", d.met_gain);
    }
    s.missing_rate = j.value("missing_rate", 0.0);
    s.seed = j.value("seed", s.seed);
    s.validate();
    return s;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed synthetic spec: ") + e.what());
  }
}

SynthCampaign generate(const SynthSpec& spec) {
  spec.validate();
  const GridGeometry& g = spec.geometry;
  const std::size_t k = spec.layout.k(), l = spec.layout.l(), q = spec.channels.size();
  SynthCampaign out;

  std::vector<double> level;
  out.covariates.geometry = g;
  out.covariates.layers = spatial_layers(spec, level);

  // Time axis.
  std::vector<Hour> hours;
  for (Hour h = spec.start; hours.size() < spec.n_hours; ++h)
    if (!spec.traffic_only || spec.window.contains(h)) hours.push_back(h);
  const std::size_t T = hours.size();

  // Temporal covariates and the temporal factor of C.
  auto trng = stream(spec.seed, kTemporal);
  std::vector<double> xt(T * l), factor(T), rh_day(T);
  {
    Hour cur_day = hours.front() / 24 - 1;
    double day_z = 0.0, met_day = 0.0, temp_day = 0.0, rh = 0.0;
    const auto& f = spec.field;
    for (std::size_t t = 0; t < T; ++t) {
      const Hour d = hours[t] / 24;
      if (d != cur_day) {
        cur_day = d;
        day_z = gauss(trng);
        met_day = gauss(trng);
        temp_day = gauss(trng);
        rh = gauss(trng);
      }
      const int hod = hour_of_day(hours[t]);
      const double inv_ustar = std::clamp(1.5 + 0.45 * met_day + 0.25 * gauss(trng), 0.4, 3.0);
      const double temperature =
          6.0 + 3.0 * temp_day + 2.5 * std::sin(2.0 * std::numbers::pi * (hod - 9) / 24.0) +
          0.5 * gauss(trng);
      for (std::size_t i = 0; i < l; ++i)
        xt[t * l + i] = i == 0 ? inv_ustar : i == 1 ? temperature : gauss(trng);
      factor[t] = diurnal(f, hod) * std::exp(f.day_sd * day_z - 0.5 * f.day_sd * f.day_sd) *
                  std::exp(f.hour_sd * gauss(trng)) *
                  std::max(0.1, 1.0 + f.met_gain * (inv_ustar - 1.5));
      rh_day[t] = rh;
    }
  }

  // Latent and model grids.
  out.latent.resize(T);
  out.model.resize(T);
  const auto nT = static_cast<std::ptrdiff_t>(T);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t ti = 0; ti < nT; ++ti) {
    const auto t = static_cast<std::size_t>(ti);
    const std::span<const double> xtt(xt.data() + t * l, l);
    auto& c = out.latent[t];
    auto& m = out.model[t];
    c.geometry = m.geometry = g;
    c.timestamp = m.timestamp = hours[t];
    c.values.resize(g.size());
    m.values.resize(g.size());
    const double l0 = eval_l0(spec.bias, xtt);
    std::vector<double> xs(k);
    for (std::size_t cell = 0; cell < g.size(); ++cell) {
      for (std::size_t s = 0; s < k; ++s) xs[s] = out.covariates.layers[s][cell];
      const double conc = level[cell] * factor[t];
      c.values[cell] = conc;
      m.values[cell] = l0 + conc * (1.0 + eval_lc(spec.bias, xs, xtt));
    }
  }

  // Device placement: distinct cells away from the border.
  auto prng = stream(spec.seed, kPlacement);
  std::set<std::size_t> used;
  // By default stations alternate between traffic sites and background
  // sites, as monitoring networks do; sensors go anywhere.
  auto site_ok = [&](StationSite site, std::size_t cell) {
    if (k == 0) return true;
    const double road = out.covariates.layers[0][cell];
    const double green = k > 1 ? out.covariates.layers[1][cell] : 0.0;
    switch (site) {
      case StationSite::traffic: return road >= 0.4;
      case StationSite::background: return road <= 0.1;
      case StationSite::park: return road <= 0.1 && green >= 0.3;
      case StationSite::open: return road <= 0.1 && green <= 0.1;
      case StationSite::any: return true;
    }
    return true;
  };
  auto pick_cell = [&](StationSite site) {
    const std::size_t margin_x = g.nx > 4 ? 2 : 0, margin_y = g.ny > 4 ? 2 : 0;
    for (int attempt = 0;; ++attempt) {
      const auto i = static_cast<std::size_t>(uniform(prng, static_cast<double>(margin_x),
                                                      static_cast<double>(g.nx - margin_x)));
      const auto j = static_cast<std::size_t>(uniform(prng, static_cast<double>(margin_y),
                                                      static_cast<double>(g.ny - margin_y)));
      const std::size_t cell = g.index(std::min(i, g.nx - 1), std::min(j, g.ny - 1));
      if (attempt < 10000 && !site_ok(site, cell)) continue;
      if (used.insert(cell).second) return cell;
    }
  };

  ObservationSet& obs = out.observations;
  obs.layout = spec.layout;
  obs.channel_names = spec.channels;
  obs.hours = hours;
  obs.xt = xt;

  struct Pending { DeviceSeries d; std::vector<double> latent; };
  std::vector<Pending> devices;
  const std::size_t n_dev = spec.n_stations + spec.sensors.size();
  for (std::size_t di = 0; di < n_dev; ++di) {
    const bool is_station = di < spec.n_stations;
    Pending p;
    DeviceSeries& d = p.d;
    d.kind = is_station ? DeviceKind::station : DeviceKind::sensor;
    d.id = is_station ? "STA" + std::to_string(di + 1) : spec.sensors[di - spec.n_stations].sensor_id;
    StationSite site = StationSite::any;
    if (is_station)
      site = !spec.station_sites.empty() ? spec.station_sites[di]
             : di % 2 == 0               ? StationSite::traffic
                                         : StationSite::background;
    d.cell = pick_cell(site);
    d.x = g.center_x(d.cell % g.nx);
    d.y = g.center_y(d.cell / g.nx);
    for (std::size_t s = 0; s < k; ++s) d.xs.push_back(out.covariates.layers[s][d.cell]);

    auto drng = stream(spec.seed, kDevice + static_cast<std::uint32_t>(di));
    d.z.resize(T);
    d.m.resize(T);
    p.latent.resize(T);
    if (!is_station) d.channels.resize(T * q);
    for (std::size_t t = 0; t < T; ++t) {
      const double conc = out.latent[t].values[d.cell];
      p.latent[t] = conc;
      d.m[t] = out.model[t].values[d.cell];
      if (is_station) {
        d.z[t] = conc + spec.bias.sigma0 * gauss(drng);
      } else {
        const auto& cal = spec.sensors[di - spec.n_stations];
        const double temperature = l > 1 ? xt[t * l + 1] : 6.0;
        double zz = cal.beta + cal.alpha * conc;
        for (std::size_t c = 0; c < q; ++c) {
          const double y = channel_value(spec.channels[c], conc, temperature, rh_day[t], drng);
          d.channels[t * q + c] = y;
          zz += cal.gamma[c] * y;
        }
        d.z[t] = zz + cal.sigma * gauss(drng);
        if (spec.missing_rate > 0.0 && uniform(drng, 0.0, 1.0) < spec.missing_rate)
          d.z[t] = std::numeric_limits<double>::quiet_NaN();
      }
    }
    devices.push_back(std::move(p));
  }
  std::sort(devices.begin(), devices.end(),
            [](const Pending& a, const Pending& b) { return a.d.id < b.d.id; });
  for (auto& p : devices) {
    obs.devices.push_back(std::move(p.d));
    out.device_latent.push_back(std::move(p.latent));
  }
  obs.refresh_masks();
  return out;
}

std::vector<RegressionRow> generate_station_regression(const RegressionSynthSpec& spec) {
  const std::size_t k = spec.layout.k(), l = spec.layout.l();
  if (spec.bias.k() != k || spec.bias.l() != l)
    throw ConfigError("regression truth does not match the covariate layout");
  auto rng = stream(spec.seed, 7);
  std::vector<std::vector<double>> station_xs(spec.n_stations, std::vector<double>(k));
  for (auto& xs : station_xs)
    for (std::size_t s = 0; s < k; ++s) xs[s] = uniform(rng, 0.0, 1.0);
  std::vector<std::vector<double>> hour_xt(spec.n_hours, std::vector<double>(l));
  for (auto& xt : hour_xt)
    for (std::size_t i = 0; i < l; ++i) xt[i] = uniform(rng, 0.5, 2.5);

  std::vector<RegressionRow> rows;
  rows.reserve(spec.n_stations * spec.n_hours);
  const Hour start = to_hour({2022, 12, 1, 0});
  for (std::size_t i = 0; i < spec.n_stations; ++i)
    for (std::size_t t = 0; t < spec.n_hours; ++t) {
      RegressionRow r;
      r.device_id = "STA" + std::to_string(i + 1);
      r.kind = DeviceKind::station;
      r.hour = start + static_cast<Hour>(t);
      r.xs = station_xs[i];
      r.xt = hour_xt[t];
      r.z = std::max(1.0, spec.z_mean + spec.z_sd * gauss(rng));
      const double s = 1.0 + eval_lc(spec.bias, r.xs, r.xt);
      r.m = eval_l0(spec.bias, r.xt) + r.z * s + s * spec.bias.sigma0 * gauss(rng);
      rows.push_back(std::move(r));
    }
  return rows;
}

}  // namespace aqbias
