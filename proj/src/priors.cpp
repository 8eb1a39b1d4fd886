#include "aqbias/priors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "aqbias/error.hpp"
#include "aqbias/observations.hpp"

namespace aqbias {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
constexpr double kHalfLog2Pi = 0.91893853320467274178;

const char* family_name(PriorFamily f) {
  switch (f) {
    case PriorFamily::normal: return "normal";
    case PriorFamily::gamma: return "gamma";
    case PriorFamily::weibull: return "weibull";
  }
  return "?";
}

nlohmann::json prior_to_json(const Prior& p) {
  nlohmann::json j;
  j["family"] = family_name(p.family);
  if (p.family == PriorFamily::normal) {
    j["mean"] = p.p1;
    j["sd"] = p.p2;
  } else {
    j["shape"] = p.p1;
    j["scale"] = p.p2;
    if (p.negate) j["negate"] = true;
  }
  return j;
}

Prior prior_from_json(const std::string& name, const nlohmann::json& j) {
  try {
    const auto family = j.at("family").get<std::string>();
    Prior p;
    if (family == "normal") {
      p = Prior::normal(j.at("mean").get<double>(), j.at("sd").get<double>());
    } else if (family == "gamma" || family == "weibull") {
      p.family = family == "gamma" ? PriorFamily::gamma : PriorFamily::weibull;
      p.p1 = j.at("shape").get<double>();
      p.p2 = j.at("scale").get<double>();
      p.negate = j.value("negate", false);
    } else {
      throw ConfigError("prior '" + name + "': unknown family '" + family + "'");
    }
    p.validate(name);
    return p;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("prior '" + name + "': " + e.what());
  }
}

}  // namespace

bool Prior::in_support(double x) const {
  if (!std::isfinite(x)) return false;
  if (family == PriorFamily::normal) return true;
  return sign() * x > 0.0;
}

double Prior::logpdf(double x) const {
  if (!in_support(x)) return kNegInf;
  switch (family) {
    case PriorFamily::normal: {
      const double r = (x - p1) / p2;
      return -std::log(p2) - kHalfLog2Pi - 0.5 * r * r;
    }
    case PriorFamily::gamma: {
      const double v = sign() * x;
      return (p1 - 1.0) * std::log(v) - v / p2 - std::lgamma(p1) -
             p1 * std::log(p2);
    }
    case PriorFamily::weibull: {
      const double v = sign() * x;
      return std::log(p1 / p2) + (p1 - 1.0) * std::log(v / p2) -
             std::pow(v / p2, p1);
    }
  }
  return kNegInf;
}

double Prior::mean() const {
  switch (family) {
    case PriorFamily::normal: return p1;
    case PriorFamily::gamma: return sign() * p1 * p2;
    case PriorFamily::weibull: return sign() * p2 * std::tgamma(1.0 + 1.0 / p1);
  }
  return 0.0;
}

double Prior::variance() const {
  switch (family) {
    case PriorFamily::normal: return p2 * p2;
    case PriorFamily::gamma: return p1 * p2 * p2;
    case PriorFamily::weibull: {
      const double g1 = std::tgamma(1.0 + 1.0 / p1);
      return p2 * p2 * (std::tgamma(1.0 + 2.0 / p1) - g1 * g1);
    }
  }
  return 0.0;
}

double Prior::sample(std::mt19937_64& rng) const {
  switch (family) {
    case PriorFamily::normal: return std::normal_distribution<double>(p1, p2)(rng);
    case PriorFamily::gamma: return sign() * std::gamma_distribution<double>(p1, p2)(rng);
    case PriorFamily::weibull: return sign() * std::weibull_distribution<double>(p1, p2)(rng);
  }
  return 0.0;
}

void Prior::validate(const std::string& name) const {
  if (!std::isfinite(p1) || !std::isfinite(p2) || !(p2 > 0.0))
    throw ConfigError("prior '" + name + "' has invalid hyperparameters");
  if (family != PriorFamily::normal && !(p1 > 0.0))
    throw ConfigError("prior '" + name + "' needs a positive shape");
  if (family == PriorFamily::normal && negate)
    throw ConfigError("prior '" + name + "': negate applies to gamma/weibull only");
}

ParameterLayout::ParameterLayout(CovariateLayout covariates,
                                 std::vector<std::string> channels,
                                 std::vector<std::string> sensor_ids)
    : cov_(std::move(covariates)),
      channels_(std::move(channels)),
      sensors_(std::move(sensor_ids)) {
  std::sort(sensors_.begin(), sensors_.end());
  names_.push_back("a0");
  names_.push_back("ac");
  for (const auto& t : cov_.temporal) names_.push_back("thetaT." + t);
  for (const auto& s : cov_.spatial) names_.push_back("zetaS." + s);
  for (const auto& t : cov_.temporal) names_.push_back("zetaT." + t);
  names_.push_back("sigma0");
  for (const auto& id : sensors_) {
    names_.push_back("beta." + id);
    names_.push_back("alpha." + id);
    for (const auto& c : channels_) names_.push_back("gamma." + c + "." + id);
    names_.push_back("sigma." + id);
  }
}

std::size_t ParameterLayout::index_of(const std::string& name) const {
  auto it = std::find(names_.begin(), names_.end(), name);
  if (it == names_.end()) throw ConfigError("unknown parameter '" + name + "'");
  return static_cast<std::size_t>(it - names_.begin());
}

const Prior& PriorSpec::bias_prior(const std::string& key) const {
  for (const auto& [name, p] : bias)
    if (name == key) return p;
  throw ConfigError("no prior for bias parameter '" + key + "'");
}

const Prior& PriorSpec::sensor_prior(const std::string& key) const {
  for (const auto& [name, p] : sensor)
    if (name == key) return p;
  throw ConfigError("no prior for sensor parameter '" + key + "'");
}

std::vector<Prior> PriorSpec::expand(const ParameterLayout& layout) const {
  std::vector<Prior> out;
  out.reserve(layout.size());
  for (std::size_t i = 0; i < layout.bias_size(); ++i)
    out.push_back(bias_prior(layout.names()[i]));
  for (std::size_t j = 0; j < layout.n_sensors(); ++j) {
    out.push_back(sensor_prior("beta"));
    out.push_back(sensor_prior("alpha"));
    for (const auto& c : layout.channels()) out.push_back(sensor_prior("gamma." + c));
    out.push_back(sensor_prior("sigma"));
  }
  for (std::size_t i = 0; i < out.size(); ++i) out[i].validate(layout.names()[i]);
  return out;
}

nlohmann::json PriorSpec::to_json() const {
  nlohmann::json j;
  j["spatial_covariates"] = covariates.spatial;
  j["temporal_covariates"] = covariates.temporal;
  j["channels"] = channels;
  // Arrays of [name, prior] keep the declared order on a round trip.
  j["bias"] = nlohmann::json::array();
  for (const auto& [name, p] : bias) j["bias"].push_back({{"name", name}, {"prior", prior_to_json(p)}});
  j["sensor"] = nlohmann::json::array();
  for (const auto& [name, p] : sensor) j["sensor"].push_back({{"name", name}, {"prior", prior_to_json(p)}});
  return j;
}

PriorSpec PriorSpec::from_json(const nlohmann::json& j) {
  try {
    PriorSpec s;
    s.covariates.spatial = j.at("spatial_covariates").get<std::vector<std::string>>();
    s.covariates.temporal = j.at("temporal_covariates").get<std::vector<std::string>>();
    s.channels = j.at("channels").get<std::vector<std::string>>();
    for (const auto& e : j.at("bias")) {
      const auto name = e.at("name").get<std::string>();
      s.bias.emplace_back(name, prior_from_json(name, e.at("prior")));
    }
    for (const auto& e : j.at("sensor")) {
      const auto name = e.at("name").get<std::string>();
      s.sensor.emplace_back(name, prior_from_json(name, e.at("prior")));
    }
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed prior file: ") + e.what());
  }
}

PriorSpec default_priors(const CovariateLayout& covariates,
                         const std::vector<std::string>& channels) {
  const CovariateLayout rouen = CovariateLayout::rouen();
  if (!(covariates == rouen))
    throw ConfigError(
        "default priors cover the (roads, green, elevation) x (inv_ustar, "
        "temperature) layout only; supply a prior file");
  auto sorted = channels;
  std::sort(sorted.begin(), sorted.end());
  auto expected = rouen_channels();
  std::sort(expected.begin(), expected.end());
  if (sorted != expected)
    throw ConfigError(
        "default priors cover the channels NO, CO, Ox, RH, T only; supply a "
        "prior file");

  PriorSpec s;
  s.covariates = covariates;
  s.channels = channels;
  s.bias = {
      {"a0", Prior::normal(0.0, 1.0)},
      {"ac", Prior::gamma(4.0, 0.25, true)},
      {"thetaT.inv_ustar", Prior::normal(0.0, 1.0)},
      {"thetaT.temperature", Prior::gamma(2.0, 0.001, true)},
      {"zetaS.roads", Prior::gamma(1.0, 5.0, true)},
      {"zetaS.green", Prior::gamma(1.0, 5.0)},
      {"zetaS.elevation", Prior::weibull(2.0, 1.0)},
      {"zetaT.inv_ustar", Prior::normal(0.5, 1.0)},
      {"zetaT.temperature", Prior::gamma(2.0, 0.001)},
      // Same family as the sensor noise scales.
      {"sigma0", Prior::weibull(5.0, 25.0)},
  };
  s.sensor = {
      {"beta", Prior::normal(27000.0, 1000.0)},
      {"alpha", Prior::gamma(7.0, 0.5, true)},
      {"gamma.NO", Prior::normal(0.0, 1.0)},
      {"gamma.Ox", Prior::normal(0.0, 1.0)},
      {"gamma.CO", Prior::normal(0.0, 1.0)},
      {"gamma.T", Prior::normal(-10.0, 5.0)},
      {"gamma.RH", Prior::normal(-1.0, 1.0)},
      // Shape 5, scale 25: centred near the fitted sensor noise (~20-35).
      {"sigma", Prior::weibull(5.0, 25.0)},
  };
  return s;
}

double log_prior(std::span<const double> theta, std::span<const Prior> priors) {
  if (theta.size() != priors.size())
    throw ConfigError("parameter vector and prior list differ in length");
  double s = 0.0;
  for (std::size_t i = 0; i < theta.size(); ++i) {
    const double lp = priors[i].logpdf(theta[i]);
    if (lp == kNegInf) return kNegInf;
    s += lp;
  }
  return s;
}

std::vector<double> prior_means(std::span<const Prior> priors) {
  std::vector<double> out;
  out.reserve(priors.size());
  for (const auto& p : priors) out.push_back(p.mean());
  return out;
}

}  // namespace aqbias
