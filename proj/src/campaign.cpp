#include "aqbias/campaign.hpp"

#include <fnmatch.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <limits>
#include <map>
#include <set>

#include "aqbias/error.hpp"
#include "aqbias/io.hpp"
#include "aqbias/params_io.hpp"
#include "aqbias/synth.hpp"

namespace aqbias {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const char* to_string(OutsideTraffic o) { return o == OutsideTraffic::warn ? "warn" : "refuse"; }

OutsideTraffic parse_outside_traffic(const std::string& s) {
  if (s == "warn") return OutsideTraffic::warn;
  if (s == "refuse") return OutsideTraffic::refuse;
  throw ConfigError("outside_traffic must be 'warn' or 'refuse', got '" + s + "'");
}

template <class T, class Key>
void require_unique(const std::vector<T>& items, Key key, const std::string& what) {
  std::set<std::string> seen;
  for (const auto& it : items) {
    const std::string& k = key(it);
    if (k.empty()) throw ConfigError(what + " with an empty name");
    if (!seen.insert(k).second) throw ConfigError("duplicate " + what + " '" + k + "'");
  }
}

int digits(const std::string& s, std::size_t& pos, int n, const std::string& name) {
  if (pos + static_cast<std::size_t>(n) > s.size())
    throw FormatError(name + ": file name too short for its timestamp pattern");
  int v = 0;
  for (int i = 0; i < n; ++i, ++pos) {
    const char c = s[pos];
    if (c < '0' || c > '9') throw FormatError(name + ": expected a digit in the timestamp");
    v = v * 10 + (c - '0');
  }
  return v;
}

}  // namespace

CovariateLayout CampaignConfig::layout() const {
  CovariateLayout l;
  for (const auto& s : spatial) l.spatial.push_back(s.name);
  l.temporal = temporal;
  return l;
}

std::vector<std::string> CampaignConfig::channel_names() const {
  std::vector<std::string> out;
  for (const auto& c : channels) out.push_back(c.name);
  return out;
}

std::string CampaignConfig::resolve(const std::string& path) const {
  const fs::path p(path);
  return p.is_absolute() ? p.string() : (fs::path(base_dir) / p).string();
}

void CampaignConfig::validate() const {
  if (devices.empty()) throw ConfigError("campaign has an empty device registry");
  require_unique(devices, [](const DeviceEntry& d) -> const std::string& { return d.id; }, "device");
  require_unique(channels, [](const ChannelSource& c) -> const std::string& { return c.name; },
                 "channel");
  require_unique(spatial, [](const SpatialSource& s) -> const std::string& { return s.name; },
                 "spatial covariate");
  require_unique(temporal, [](const std::string& s) -> const std::string& { return s; },
                 "temporal covariate");
  for (const auto& c : channels)
    if (c.column.empty()) throw ConfigError("channel " + c.name + " has no raw column");
  for (const auto& d : devices) {
    if (!std::isfinite(d.x) || !std::isfinite(d.y))
      throw ConfigError("device " + d.id + " has a non-finite location");
    if (d.path.empty()) throw ConfigError("device " + d.id + " has no data file");
  }
  if (grid_glob.empty()) throw ConfigError("campaign config names no model grids");
  if (!temporal.empty() && temporal_path.empty())
    throw ConfigError("temporal covariates are named but no table is given");
  window.validate();
}

json CampaignConfig::to_json() const {
  json j;
  j["crs"] = crs;
  j["grids"] = {{"glob", grid_glob}, {"timestamp_pattern", timestamp_pattern}};
  j["spatial_covariates"] = json::array();
  for (const auto& s : spatial)
    j["spatial_covariates"].push_back({{"name", s.name}, {"path", s.path}, {"resample", s.resample}});
  j["temporal_covariates"] = {{"path", temporal_path}, {"names", temporal}};
  j["channels"] = json::array();
  for (const auto& c : channels) j["channels"].push_back({{"name", c.name}, {"column", c.column}});
  j["devices"] = json::array();
  for (const auto& d : devices)
    j["devices"].push_back({{"id", d.id}, {"kind", aqbias::to_string(d.kind)}, {"x", d.x},
                            {"y", d.y}, {"path", d.path}});
  j["traffic_window"] = {{"weekdays", window.weekdays}, {"hours", window.hours}};
  j["outside_traffic"] = to_string(outside_traffic);
  return j;
}

CampaignConfig CampaignConfig::from_json(const json& j, const std::string& base_dir) {
  try {
    CampaignConfig c;
    c.base_dir = base_dir;
    c.crs = j.value("crs", std::string());
    const auto& g = j.at("grids");
    c.grid_glob = g.at("glob").get<std::string>();
    c.timestamp_pattern = g.value("timestamp_pattern", std::string());
    for (const auto& s : j.value("spatial_covariates", json::array()))
      c.spatial.push_back({s.at("name").get<std::string>(), s.at("path").get<std::string>(),
                           s.value("resample", false)});
    if (j.contains("temporal_covariates")) {
      const auto& t = j["temporal_covariates"];
      c.temporal_path = t.value("path", std::string());
      c.temporal = t.value("names", std::vector<std::string>());
    }
    for (const auto& ch : j.value("channels", json::array())) {
      const std::string name = ch.at("name").get<std::string>();
      c.channels.push_back({name, ch.value("column", name)});
    }
    for (const auto& d : j.at("devices"))
      c.devices.push_back({d.at("id").get<std::string>(),
                           parse_device_kind(d.at("kind").get<std::string>()),
                           d.at("x").get<double>(), d.at("y").get<double>(),
                           d.at("path").get<std::string>()});
    if (j.contains("traffic_window")) {
      c.window.weekdays = j["traffic_window"].at("weekdays").get<std::vector<int>>();
      c.window.hours = j["traffic_window"].at("hours").get<std::vector<std::pair<int, int>>>();
    }
    c.outside_traffic = parse_outside_traffic(j.value("outside_traffic", std::string("warn")));
    c.validate();
    return c;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed campaign config: ") + e.what());
  }
}

CampaignConfig read_campaign_config(const std::string& path) {
  const json j = read_json_file(path);
  const fs::path parent = fs::path(path).parent_path();
  return CampaignConfig::from_json(j, parent.empty() ? "." : parent.string());
}

void write_campaign_config(const CampaignConfig& config, const std::string& path) {
  write_json_file(config.to_json(), path);
}

Hour parse_timestamp_pattern(const std::string& name, const std::string& pattern) {
  int year = 1970, month = 1, day = 1, hour = 0;
  std::size_t pos = 0;
  for (std::size_t i = 0; i < pattern.size(); ++i) {
    if (pattern[i] == '%' && i + 1 < pattern.size()) {
      const char f = pattern[++i];
      switch (f) {
        case 'Y': year = digits(name, pos, 4, name); break;
        case 'm': month = digits(name, pos, 2, name); break;
        case 'd': day = digits(name, pos, 2, name); break;
        case 'H': hour = digits(name, pos, 2, name); break;
        case '%':
          if (pos >= name.size() || name[pos] != '%') throw FormatError(name + ": pattern mismatch");
          ++pos;
          break;
        default: throw ConfigError(std::string("unsupported timestamp field %") + f);
      }
    } else {
      if (pos >= name.size() || name[pos] != pattern[i])
        throw FormatError(name + ": does not match timestamp pattern " + pattern);
      ++pos;
    }
  }
  if (pos != name.size()) throw FormatError(name + ": does not match timestamp pattern " + pattern);
  if (month < 1 || month > 12 || day < 1 || day > 31 || hour > 23)
    throw FormatError(name + ": timestamp out of range");
  const Hour h = to_hour({year, static_cast<unsigned>(month), static_cast<unsigned>(day), hour});
  const CivilTime back = to_civil(h);
  if (back.day != static_cast<unsigned>(day))
    throw FormatError(name + ": no such calendar day");
  return h;
}

std::string format_timestamp_pattern(Hour h, const std::string& pattern) {
  const CivilTime c = to_civil(h);
  auto pad = [](long v, int width) {
    std::string s = std::to_string(v);
    return std::string(static_cast<std::size_t>(std::max(0, width - static_cast<int>(s.size()))), '0') + s;
  };
  std::string out;
  for (std::size_t i = 0; i < pattern.size(); ++i) {
    if (pattern[i] == '%' && i + 1 < pattern.size()) {
      const char f = pattern[++i];
      switch (f) {
        case 'Y': out += pad(c.year, 4); break;
        case 'm': out += pad(c.month, 2); break;
        case 'd': out += pad(c.day, 2); break;
        case 'H': out += pad(c.hour, 2); break;
        case '%': out += '%'; break;
        default: throw ConfigError(std::string("unsupported timestamp field %") + f);
      }
    } else {
      out += pattern[i];
    }
  }
  return out;
}

GridIndex list_grids(const CampaignConfig& config) {
  const fs::path glob(config.grid_glob);
  const fs::path dir = fs::path(config.resolve(glob.parent_path().empty() ? "." : glob.parent_path().string()));
  const std::string name_pattern = glob.filename().string();
  if (!fs::is_directory(dir)) throw FormatError("grid directory not found: " + dir.string());

  std::vector<std::pair<Hour, std::string>> found;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    const std::string name = entry.path().filename().string();
    if (fnmatch(name_pattern.c_str(), name.c_str(), 0) != 0) continue;
    Hour h;
    if (!config.timestamp_pattern.empty()) {
      h = parse_timestamp_pattern(name, config.timestamp_pattern);
    } else {
      h = read_grid(entry.path().string()).timestamp;
    }
    found.emplace_back(h, entry.path().string());
  }
  std::sort(found.begin(), found.end());
  GridIndex out;
  for (std::size_t i = 0; i < found.size(); ++i) {
    if (i > 0 && found[i].first == found[i - 1].first)
      throw DataError("two model grids for " + format_hour(found[i].first) + ": " +
                      found[i - 1].second + " and " + found[i].second);
    out.hours.push_back(found[i].first);
    out.paths.push_back(found[i].second);
  }
  return out;
}

CovariateStack load_covariates(const CampaignConfig& config, const GridGeometry& geometry) {
  CovariateStack stack;
  stack.geometry = geometry;
  for (const auto& s : config.spatial) {
    ConcentrationGrid g = read_grid(config.resolve(s.path));
    if (s.resample) {
      g = resample_elevation(g, geometry);
    } else if (!(g.geometry == geometry)) {
      throw ConfigError("covariate raster " + s.name + " does not share the model grid geometry");
    }
    std::vector<double> layer(g.values.size());
    for (std::size_t i = 0; i < layer.size(); ++i)
      layer[i] = g.is_nodata(g.values[i]) ? std::numeric_limits<double>::quiet_NaN() : g.values[i];
    stack.layers.push_back(std::move(layer));
  }
  return stack;
}

Assembly assemble(const CampaignConfig& config) {
  config.validate();
  Assembly out;
  out.grids = list_grids(config);
  if (out.grids.hours.empty()) throw DataError("no model grids match " + config.grid_glob);
  const double nan = std::numeric_limits<double>::quiet_NaN();

  ConcentrationGrid first = read_grid(out.grids.paths.front());
  const GridGeometry geometry = first.geometry;
  out.covariates = load_covariates(config, geometry);

  ObservationSet& obs = out.observations;
  obs.layout = config.layout();
  obs.channel_names = config.channel_names();
  obs.hours = out.grids.hours;
  const std::size_t T = obs.hours.size(), l = obs.layout.l(), q = obs.q();

  if (l > 0) {
    const TemporalTable tt = read_temporal_csv(config.resolve(config.temporal_path), config.temporal);
    std::map<Hour, std::size_t> row_of;
    for (std::size_t r = 0; r < tt.hours.size(); ++r) row_of[tt.hours[r]] = r;
    obs.xt.resize(T * l);
    for (std::size_t t = 0; t < T; ++t) {
      const auto it = row_of.find(obs.hours[t]);
      if (it == row_of.end())
        throw DataError("no temporal covariates for " + format_hour(obs.hours[t]));
      std::copy_n(tt.values.begin() + static_cast<std::ptrdiff_t>(it->second * l), l,
                  obs.xt.begin() + static_cast<std::ptrdiff_t>(t * l));
    }
  }

  std::vector<DeviceEntry> entries = config.devices;
  std::sort(entries.begin(), entries.end(),
            [](const DeviceEntry& a, const DeviceEntry& b) { return a.id < b.id; });
  std::vector<std::string> raw_columns;
  for (const auto& c : config.channels) raw_columns.push_back(c.column);

  std::map<Hour, std::size_t> hour_index;
  for (std::size_t t = 0; t < T; ++t) hour_index[obs.hours[t]] = t;

  for (const auto& e : entries) {
    DeviceSeries d;
    d.id = e.id;
    d.kind = e.kind;
    d.x = e.x;
    d.y = e.y;
    const auto cell = geometry.cell_at(e.x, e.y);
    if (!cell) throw ConfigError("device " + e.id + " lies outside the grid extent");
    d.cell = *cell;
    for (const auto& layer : out.covariates.layers) d.xs.push_back(layer[d.cell]);
    d.z.assign(T, nan);
    d.m.assign(T, nan);
    const bool sensor = e.kind == DeviceKind::sensor;
    if (sensor) d.channels.assign(T * q, nan);
    const DeviceTable table =
        read_device_csv(config.resolve(e.path), sensor ? raw_columns : std::vector<std::string>{});
    for (std::size_t r = 0; r < table.hours.size(); ++r) {
      const auto it = hour_index.find(table.hours[r]);
      if (it == hour_index.end()) continue;
      const std::size_t t = it->second;
      d.z[t] = table.value[r];
      if (sensor)
        std::copy_n(table.channels.begin() + static_cast<std::ptrdiff_t>(r * q), q,
                    d.channels.begin() + static_cast<std::ptrdiff_t>(t * q));
    }
    obs.devices.push_back(std::move(d));
  }

  for (std::size_t t = 0; t < T; ++t) {
    const ConcentrationGrid g = t == 0 ? std::move(first) : read_grid(out.grids.paths[t]);
    if (!(g.geometry == geometry))
      throw FormatError(out.grids.paths[t] + ": geometry differs from the first grid");
    if (!config.timestamp_pattern.empty() && g.timestamp != obs.hours[t])
      throw FormatError(out.grids.paths[t] + ": header timestamp " + format_hour(g.timestamp) +
                        " disagrees with the file name");
    for (auto& d : obs.devices) {
      const double v = g.values[d.cell];
      d.m[t] = g.is_nodata(v) ? nan : v;
    }
  }

  obs.refresh_masks();
  for (const auto& d : obs.devices)
    out.missing_hours.emplace_back(
        d.id, static_cast<std::size_t>(std::count(d.mask.begin(), d.mask.end(), 0)));
  return out;
}

void write_synthetic_campaign(const SynthCampaign& campaign, const SynthSpec& spec,
                              const std::string& dir) {
  const fs::path root(dir);
  for (const char* sub : {"model", "latent", "covariates", "devices"})
    fs::create_directories(root / sub);
  const ObservationSet& obs = campaign.observations;

  CampaignConfig cfg;
  cfg.base_dir = dir;
  cfg.crs = "synthetic local metric grid";
  cfg.grid_glob = "model/M_*.grid";
  cfg.timestamp_pattern = "M_%Y%m%dT%H.grid";
  cfg.window = spec.window;
  cfg.temporal = spec.layout.temporal;
  cfg.temporal_path = "temporal.csv";
  for (const auto& c : spec.channels) cfg.channels.push_back({c, c});

  for (std::size_t t = 0; t < campaign.model.size(); ++t) {
    const Hour h = campaign.model[t].timestamp;
    write_grid(campaign.model[t], (root / "model" / format_timestamp_pattern(h, cfg.timestamp_pattern)).string(),
               GridEncoding::binary);
    write_grid(campaign.latent[t], (root / "latent" / format_timestamp_pattern(h, "C_%Y%m%dT%H.grid")).string(),
               GridEncoding::binary);
  }
  for (std::size_t s = 0; s < spec.layout.k(); ++s) {
    ConcentrationGrid g;
    g.geometry = campaign.covariates.geometry;
    g.timestamp = spec.start;
    g.values = campaign.covariates.layers[s];
    const std::string rel = "covariates/" + spec.layout.spatial[s] + ".grid";
    write_grid(g, (root / rel).string(), GridEncoding::ascii);
    cfg.spatial.push_back({spec.layout.spatial[s], rel, false});
  }

  TemporalTable tt;
  tt.names = spec.layout.temporal;
  tt.hours = obs.hours;
  tt.values = obs.xt;
  write_temporal_csv(tt, (root / cfg.temporal_path).string());

  for (const auto& d : obs.devices) {
    DeviceTable table;
    table.hours = obs.hours;
    table.value = d.z;
    if (d.kind == DeviceKind::sensor) {
      table.columns = spec.channels;
      table.channels = d.channels;
    }
    const std::string rel = "devices/" + d.id + ".csv";
    write_device_csv(table, (root / rel).string());
    cfg.devices.push_back({d.id, d.kind, d.x, d.y, rel});
  }
  write_campaign_config(cfg, (root / "config.json").string());

  ParameterFile truth;
  truth.layout = spec.layout;
  truth.channels = spec.channels;
  truth.bias = spec.bias;
  truth.sensors = spec.sensors;
  std::sort(truth.sensors.begin(), truth.sensors.end(),
            [](const SensorCalibration& a, const SensorCalibration& b) { return a.sensor_id < b.sensor_id; });
  truth.estimate = "truth";
  write_parameter_file(truth, (root / "truth.json").string());
  write_json_file(spec.to_json(), (root / "spec.json").string());
}

}  // namespace aqbias
