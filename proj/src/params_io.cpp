#include "aqbias/params_io.hpp"

#include <fstream>

#include "aqbias/csv.hpp"

#include "aqbias/error.hpp"

namespace aqbias {

namespace {

using nlohmann::json;

json named(const std::vector<std::string>& names, const std::vector<double>& values) {
  json j = json::object();
  j["names"] = names;
  j["values"] = values;
  return j;
}

std::vector<double> read_named(const json& j, const std::vector<std::string>& expected,
                               const std::string& what) {
  const auto names = j.at("names").get<std::vector<std::string>>();
  if (names != expected)
    throw ConfigError(what + " names do not match the configured layout");
  auto values = j.at("values").get<std::vector<double>>();
  if (values.size() != names.size())
    throw FormatError(what + ": names and values differ in length");
  return values;
}

}  // namespace

json bias_to_json(const BiasParameters& p, const CovariateLayout& layout) {
  json j;
  j["a0"] = p.a0;
  j["ac"] = p.ac;
  j["thetaT"] = named(layout.temporal, p.thetaT);
  j["zetaS"] = named(layout.spatial, p.zetaS);
  j["zetaT"] = named(layout.temporal, p.zetaT);
  j["sigma0"] = p.sigma0;
  return j;
}

BiasParameters bias_from_json(const json& j, const CovariateLayout& layout) {
  try {
    BiasParameters p;
    p.a0 = j.at("a0").get<double>();
    p.ac = j.at("ac").get<double>();
    p.thetaT = read_named(j.at("thetaT"), layout.temporal, "thetaT");
    p.zetaS = read_named(j.at("zetaS"), layout.spatial, "zetaS");
    p.zetaT = read_named(j.at("zetaT"), layout.temporal, "zetaT");
    p.sigma0 = j.at("sigma0").get<double>();
    return p;
  } catch (const json::exception& e) {
    throw FormatError(std::string("malformed bias parameters: ") + e.what());
  }
}

json calibration_to_json(const SensorCalibration& c, const std::vector<std::string>& channels) {
  json j;
  j["id"] = c.sensor_id;
  j["beta"] = c.beta;
  j["alpha"] = c.alpha;
  j["gamma"] = named(channels, c.gamma);
  j["sigma"] = c.sigma;
  return j;
}

SensorCalibration calibration_from_json(const json& j, const std::vector<std::string>& channels) {
  try {
    SensorCalibration c;
    c.sensor_id = j.at("id").get<std::string>();
    c.beta = j.at("beta").get<double>();
    c.alpha = j.at("alpha").get<double>();
    c.gamma = read_named(j.at("gamma"), channels, "gamma of " + c.sensor_id);
    c.sigma = j.at("sigma").get<double>();
    return c;
  } catch (const json::exception& e) {
    throw FormatError(std::string("malformed sensor calibration: ") + e.what());
  }
}

json to_json(const ParameterFile& f) {
  json j;
  j["estimate"] = f.estimate;
  j["spatial_covariates"] = f.layout.spatial;
  j["temporal_covariates"] = f.layout.temporal;
  j["channels"] = f.channels;
  j["bias"] = bias_to_json(f.bias, f.layout);
  j["sensors"] = json::array();
  for (const auto& s : f.sensors) j["sensors"].push_back(calibration_to_json(s, f.channels));
  return j;
}

ParameterFile parameter_file_from_json(const json& j) {
  try {
    ParameterFile f;
    f.estimate = j.value("estimate", std::string());
    f.layout.spatial = j.at("spatial_covariates").get<std::vector<std::string>>();
    f.layout.temporal = j.at("temporal_covariates").get<std::vector<std::string>>();
    f.channels = j.at("channels").get<std::vector<std::string>>();
    f.bias = bias_from_json(j.at("bias"), f.layout);
    for (const auto& s : j.at("sensors")) f.sensors.push_back(calibration_from_json(s, f.channels));
    return f;
  } catch (const json::exception& e) {
    throw FormatError(std::string("malformed parameter file: ") + e.what());
  }
}

json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open " + path);
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw FormatError(path + ": " + e.what());
  }
}

void write_json_file(const json& j, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw FormatError("cannot write " + path);
  out << j.dump(2) << '\n';
  if (!out) throw FormatError("write failed: " + path);
}

void write_parameter_file(const ParameterFile& f, const std::string& path) {
  write_json_file(to_json(f), path);
}

ParameterFile read_parameter_file(const std::string& path) {
  return parameter_file_from_json(read_json_file(path));
}

void write_draws_csv(const ChainResult& chains, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw FormatError("cannot write " + path);
  out << "chain,iter";
  for (const auto& n : chains.layout.names()) out << ',' << n;
  out << '\n';
  for (std::size_t c = 0; c < chains.n_chains(); ++c)
    for (std::size_t i = 0; i < chains.n_keep; ++i) {
      out << c << ',' << i;
      for (std::size_t p = 0; p < chains.n_params(); ++p)
        out << ',' << csv::format_double(chains.draw(c, i, p));
      out << '\n';
    }
  if (!out) throw FormatError("write failed: " + path);
}

ChainResult read_draws_csv(const std::string& path, const ParameterLayout& layout) {
  const csv::Table t = csv::read_file(path);
  std::vector<std::string> expected{"chain", "iter"};
  expected.insert(expected.end(), layout.names().begin(), layout.names().end());
  if (t.header != expected) throw FormatError(path + ": draw columns do not match the layout");
  ChainResult r;
  r.layout = layout;
  const std::size_t np = layout.size();
  std::size_t n_keep = 0;
  for (std::size_t row = 0; row < t.rows.size(); ++row) {
    const std::string ctx = path + " row " + std::to_string(row + 1);
    const double c = csv::to_double(t.rows[row][0], ctx);
    const double it = csv::to_double(t.rows[row][1], ctx);
    if (!(c >= 0) || !(it >= 0)) throw FormatError(ctx + ": bad chain or iteration index");
    const auto ci = static_cast<std::size_t>(c), ii = static_cast<std::size_t>(it);
    if (ci == r.draws.size()) {
      if (ci > 0 && ii != 0) throw FormatError(ctx + ": chains must start at iteration 0");
      r.draws.emplace_back();
    }
    if (ci + 1 != r.draws.size() || ii * np != r.draws[ci].size())
      throw FormatError(ctx + ": draws are not ordered by chain then iteration");
    for (std::size_t p = 0; p < np; ++p) r.draws[ci].push_back(csv::to_double(t.rows[row][2 + p], ctx));
    if (ci == 0) n_keep = ii + 1;
  }
  for (const auto& d : r.draws)
    if (d.size() != n_keep * np) throw FormatError(path + ": chains differ in length");
  r.n_keep = n_keep;
  if (n_keep > 0) r.summarize();
  return r;
}

}  // namespace aqbias
