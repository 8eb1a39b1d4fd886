#include "aqbias/collocation.hpp"

#include <algorithm>
#include <set>

#include "aqbias/csv.hpp"
#include "aqbias/error.hpp"

namespace aqbias {

CollocationTable read_collocation_csv(const std::string& path,
                                      const std::vector<std::string>& channels) {
  const csv::Table t = csv::read_file(path);
  const std::size_t id = t.column("sensor"), beta = t.column("beta"), alpha = t.column("alpha"),
                    sigma = t.column("sigma");
  std::vector<std::size_t> gamma;
  for (const auto& c : channels) gamma.push_back(t.column("gamma." + c));

  CollocationTable out;
  out.channels = channels;
  std::set<std::string> seen;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const auto& row = t.rows[r];
    const std::string ctx = path + " row " + std::to_string(r + 1);
    SensorCalibration c;
    c.sensor_id = row[id];
    if (c.sensor_id.empty()) throw FormatError(ctx + ": empty sensor id");
    if (!seen.insert(c.sensor_id).second) throw FormatError(ctx + ": duplicate sensor " + c.sensor_id);
    c.beta = csv::to_double(row[beta], ctx);
    c.alpha = csv::to_double(row[alpha], ctx);
    for (std::size_t g : gamma) c.gamma.push_back(csv::to_double(row[g], ctx));
    c.sigma = csv::to_double(row[sigma], ctx);
    try {
      c.validate(channels.size());
    } catch (const ConfigError& e) {
      throw FormatError(ctx + ": " + e.what());
    }
    out.sensors.push_back(std::move(c));
  }
  return out;
}

std::vector<double> init_from_collocation(const ParameterLayout& layout,
                                          const std::vector<Prior>& priors,
                                          const CollocationTable& table) {
  if (priors.size() != layout.size())
    throw ConfigError("prior list does not match the parameter layout");
  std::vector<double> theta = prior_means(priors);
  for (std::size_t j = 0; j < layout.n_sensors(); ++j) {
    const auto it = std::find_if(table.sensors.begin(), table.sensors.end(), [&](const auto& s) {
      return s.sensor_id == layout.sensor_ids()[j];
    });
    if (it == table.sensors.end()) continue;
    theta[layout.beta(j)] = it->beta;
    theta[layout.alpha(j)] = it->alpha;
    theta[layout.sigma(j)] = it->sigma;
    for (std::size_t c = 0; c < layout.q(); ++c) {
      const auto pos = std::find(table.channels.begin(), table.channels.end(), layout.channels()[c]);
      if (pos == table.channels.end())
        throw ConfigError("collocation table lacks channel " + layout.channels()[c]);
      theta[layout.gamma(j, c)] = it->gamma[static_cast<std::size_t>(pos - table.channels.begin())];
    }
  }
  return theta;
}

}  // namespace aqbias
