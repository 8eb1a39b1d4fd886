#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "aqbias/calendar.hpp"
#include "aqbias/core.hpp"
#include "aqbias/measurement.hpp"
#include "aqbias/observations.hpp"

namespace aqbias {

/// Knobs of the latent concentration field C(s, t) = level(s) * diurnal(h)
/// * day(t) * hourly(t) * met(t).
struct LatentField {
  double base_level = 60.0;
  double road_gain = 1.2;      // relative uplift at the road maximum
  double green_loss = 0.3;     // relative loss at the green maximum
  double spatial_length = 150.0;  // m, smooth random modulation
  double spatial_sd = 0.15;
  double day_sd = 0.55;        // log-scale day-to-day factor
  double hour_sd = 0.2;        // log-scale hour-to-hour factor
  double diurnal_floor = 0.35;
  double morning_peak = 0.9;   // amplitude at 08:00
  double evening_peak = 0.75;  // amplitude at 17:00
  double met_gain = 0.2;       // per unit of inverse friction velocity

  bool operator==(const LatentField&) const = default;
};

/// Where a station may be placed. traffic: on a road; background: away
/// from roads; park: away from roads in green cover; open: away from
/// roads and green cover.
enum class StationSite { traffic, background, park, open, any };

const char* to_string(StationSite s);
StationSite parse_station_site(const std::string& text);

struct SynthSpec {
  GridGeometry geometry{0.0, 0.0, 10.0, 60, 60};
  CovariateLayout layout = CovariateLayout::rouen();
  std::vector<std::string> channels = rouen_channels();
  std::size_t n_stations = 4;
  /// One entry per station; empty alternates traffic and background.
  std::vector<StationSite> station_sites;
  std::size_t n_hours = 300;
  Hour start = 0;  // first candidate hour
  bool traffic_only = true;
  TrafficWindow window;
  BiasParameters bias;
  std::vector<SensorCalibration> sensors;
  LatentField field;
  /// Probability that a sensor-hour loses its measurement.
  double missing_rate = 0.0;
  std::uint64_t seed = 1;

  /// I=4, J=10, T=300 traffic hours from 2022-12-01 with bias truth of
  /// the Rouen scale and sensor truths spread over alpha in [-2.5, -1.1].
  static SynthSpec defaults();

  void validate() const;
  nlohmann::json to_json() const;
  static SynthSpec from_json(const nlohmann::json& j);
  bool operator==(const SynthSpec&) const = default;
};

struct SynthCampaign {
  CovariateStack covariates;
  std::vector<ConcentrationGrid> latent;  // C, one grid per hour
  std::vector<ConcentrationGrid> model;   // M = C + B
  ObservationSet observations;
  /// Latent concentration at each device, aligned with observations.
  std::vector<std::vector<double>> device_latent;
};

/// Deterministic given spec.seed. Stations measure C + N(0, sigma0^2);
/// sensors report beta + alpha C + gamma.y + N(0, sigma^2); the model
/// output is M = L0 + C (1 + Lc).
SynthCampaign generate(const SynthSpec& spec);

/// Station rows drawn in regression form: z is the regressor and
/// m = L0 + z (1 + Lc) + (1 + Lc) eps with eps ~ N(0, sigma0^2). Each
/// station gets its own random spatial covariates.
struct RegressionSynthSpec {
  CovariateLayout layout = CovariateLayout::rouen();
  BiasParameters bias;
  std::size_t n_stations = 20;
  std::size_t n_hours = 500;
  double z_mean = 50.0;
  double z_sd = 35.0;
  std::uint64_t seed = 1;
};
std::vector<RegressionRow> generate_station_regression(const RegressionSynthSpec& spec);

}  // namespace aqbias
