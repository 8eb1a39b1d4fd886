#pragma once

#include <cstddef>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "aqbias/core.hpp"

namespace aqbias {

enum class PriorFamily { normal, gamma, weibull };

/// Univariate prior. Gamma and Weibull priors live on the positive half
/// line; with `negate` set they describe the opposite of the parameter, so
/// the parameter itself is negative.
struct Prior {
  PriorFamily family = PriorFamily::normal;
  double p1 = 0.0;  // normal: mean, gamma/weibull: shape
  double p2 = 1.0;  // normal: sd,   gamma/weibull: scale
  bool negate = false;

  static Prior normal(double mean, double sd) { return {PriorFamily::normal, mean, sd, false}; }
  static Prior gamma(double shape, double scale, bool negate = false) {
    return {PriorFamily::gamma, shape, scale, negate};
  }
  static Prior weibull(double shape, double scale, bool negate = false) {
    return {PriorFamily::weibull, shape, scale, negate};
  }

  bool constrained() const { return family != PriorFamily::normal; }
  /// +1 or -1: the sign every value in the support carries.
  double sign() const { return negate ? -1.0 : 1.0; }
  bool in_support(double x) const;

  /// Log density of the parameter value; -inf outside the support.
  double logpdf(double x) const;
  double mean() const;
  double variance() const;
  double sample(std::mt19937_64& rng) const;

  void validate(const std::string& name) const;
  bool operator==(const Prior&) const = default;
};

/// Names every sampled scalar and fixes their order:
///   a0, ac, thetaT.*, zetaS.*, zetaT.*, sigma0,
///   then per sensor: beta, alpha, gamma.<channel>*, sigma.
class ParameterLayout {
 public:
  ParameterLayout() = default;
  ParameterLayout(CovariateLayout covariates, std::vector<std::string> channels,
                  std::vector<std::string> sensor_ids);

  std::size_t k() const { return cov_.k(); }
  std::size_t l() const { return cov_.l(); }
  std::size_t q() const { return channels_.size(); }
  std::size_t n_sensors() const { return sensors_.size(); }
  std::size_t size() const { return bias_size() + n_sensors() * sensor_size(); }
  std::size_t bias_size() const { return 3 + k() + 2 * l(); }
  std::size_t sensor_size() const { return q() + 3; }
  /// 3 + k + 2l + J(q + 2): regression coefficients, excluding sensor
  /// noise scales.
  std::size_t regression_count() const {
    return 3 + k() + 2 * l() + n_sensors() * (q() + 2);
  }

  std::size_t a0() const { return 0; }
  std::size_t ac() const { return 1; }
  std::size_t thetaT(std::size_t i) const { return 2 + i; }
  std::size_t zetaS(std::size_t i) const { return 2 + l() + i; }
  std::size_t zetaT(std::size_t i) const { return 2 + l() + k() + i; }
  std::size_t sigma0() const { return 2 + 2 * l() + k(); }
  std::size_t sensor_base(std::size_t j) const { return bias_size() + j * sensor_size(); }
  std::size_t beta(std::size_t j) const { return sensor_base(j); }
  std::size_t alpha(std::size_t j) const { return sensor_base(j) + 1; }
  std::size_t gamma(std::size_t j, std::size_t c) const { return sensor_base(j) + 2 + c; }
  std::size_t sigma(std::size_t j) const { return sensor_base(j) + 2 + q(); }

  const CovariateLayout& covariates() const { return cov_; }
  const std::vector<std::string>& channels() const { return channels_; }
  const std::vector<std::string>& sensor_ids() const { return sensors_; }
  const std::vector<std::string>& names() const { return names_; }
  std::size_t index_of(const std::string& name) const;

  bool operator==(const ParameterLayout&) const = default;

 private:
  CovariateLayout cov_;
  std::vector<std::string> channels_;
  std::vector<std::string> sensors_;
  std::vector<std::string> names_;
};

/// One prior per bias parameter plus one exchangeable template applied to
/// every sensor. Keys follow ParameterLayout names without the sensor
/// suffix: "a0", "zetaS.roads", "beta", "gamma.NO", ...
struct PriorSpec {
  CovariateLayout covariates;
  std::vector<std::string> channels;
  std::vector<std::pair<std::string, Prior>> bias;
  std::vector<std::pair<std::string, Prior>> sensor;

  const Prior& bias_prior(const std::string& key) const;
  const Prior& sensor_prior(const std::string& key) const;

  /// One prior per entry of layout.names(). Throws ConfigError if a
  /// parameter has no prior.
  std::vector<Prior> expand(const ParameterLayout& layout) const;

  nlohmann::json to_json() const;
  static PriorSpec from_json(const nlohmann::json& j);
};

/// The Rouen priors. Requires k = 3, l = 2 and the five channels NO, CO,
/// Ox, RH, T (any order); other shapes need an explicit prior file.
PriorSpec default_priors(const CovariateLayout& covariates,
                         const std::vector<std::string>& channels);

/// Sum of component log densities; -inf when any component leaves its
/// support.
double log_prior(std::span<const double> theta, std::span<const Prior> priors);

/// Prior means, in layout order.
std::vector<double> prior_means(std::span<const Prior> priors);

}  // namespace aqbias
