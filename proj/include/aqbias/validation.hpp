#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "aqbias/collocation.hpp"
#include "aqbias/core.hpp"
#include "aqbias/gls.hpp"
#include "aqbias/observations.hpp"
#include "aqbias/priors.hpp"
#include "aqbias/sampler.hpp"

namespace aqbias {

struct ScoreReport {
  double ev = 0.0;    // percent
  double mae = 0.0;
  double rmse = 0.0;
  std::size_t n = 0;
  std::string scope;  // training | test | loo
  std::string model;  // raw | S | S+LCS
  std::string device; // empty for pooled reports
};

/// EV = 100 (1 - SSres / SStot) with SStot around the mean of the
/// measurements; MAE and RMSE of predictions - measurements. Needs n >= 2
/// and non-zero measurement variance (DataError otherwise).
ScoreReport scores(std::span<const double> predictions, std::span<const double> measurements);

struct TrainTestSplit {
  std::vector<std::size_t> train;  // hour indices, ascending
  std::vector<std::size_t> test;
};

/// Uniform hour-level sampling without replacement of round(fraction * n)
/// training hours among the n eligible ones. DataError when n < 10 or the
/// test set would be empty.
TrainTestSplit split_train_test(const std::vector<std::uint8_t>& eligible, double fraction,
                                std::uint64_t seed);

/// S: stations only. S+LCS: stations and low-cost sensors.
enum class FitMode { S, S_LCS };
enum class FitMethod { gibbs, gls };

const char* to_string(FitMode m);
FitMode parse_fit_mode(const std::string& text);
const char* to_string(FitMethod m);
FitMethod parse_fit_method(const std::string& text);

struct FitOptions {
  FitMode mode = FitMode::S_LCS;
  FitMethod method = FitMethod::gibbs;
  /// Defaults to the built-in priors for the observation layout.
  std::optional<PriorSpec> priors;
  SamplerConfig sampler;
  GlsOptions gls;
  EstimateKind estimate = EstimateKind::mean;
  std::optional<CollocationTable> collocation;
};

struct FitResult {
  BiasParameters bias;
  std::vector<SensorCalibration> sensors;
  std::size_t station_rows = 0;
  std::size_t sensor_rows = 0;
  /// Sensor rows left out because of the mode.
  std::size_t dropped_rows = 0;
  std::optional<ChainResult> chains;
  std::optional<GlsResult> gls;
};

/// Fits on the listed hour indices. GLS refuses sensor rows (ConfigError).
FitResult fit_observations(const ObservationSet& obs, const std::vector<std::size_t>& hours,
                           const FitOptions& opt);

/// Raw model output and corrected concentration at one device over the
/// listed hours where the device record is complete.
struct DeviceSeriesScore {
  std::vector<std::size_t> hours;
  std::vector<double> measured;
  std::vector<double> raw;
  std::vector<double> corrected;
  std::size_t clamped = 0;
};

DeviceSeriesScore correct_at_device(const ObservationSet& obs, std::size_t device,
                                    const std::vector<std::size_t>& hours,
                                    const BiasParameters& p, double guard = kDefaultGuard);

struct LooOptions {
  FitOptions fit;
  /// Hours the folds fit on. Empty means every eligible hour.
  std::vector<std::size_t> fit_hours;
  /// Hours each withheld station is scored on.
  std::vector<std::size_t> eval_hours;
  /// When set, every fold uses these parameters instead of fitting.
  std::optional<BiasParameters> fixed;
};

struct LooResult {
  std::vector<std::string> stations;
  std::vector<ScoreReport> raw;        // per station
  std::vector<ScoreReport> corrected;  // per station
  ScoreReport raw_pooled;
  ScoreReport corrected_pooled;
  std::vector<BiasParameters> fold_bias;
  std::vector<DeviceSeriesScore> series;
};

/// Leave-one-station-out: each fold fits without station i (sensors kept in
/// S+LCS mode, dropped in S mode), corrects at station i and scores against
/// its measurements. Needs at least two stations.
LooResult loo_station_cv(const ObservationSet& obs, const LooOptions& opt);

struct DiurnalRow {
  std::string device;
  int hour_of_day = 0;
  std::size_t n = 0;
  double measured = 0.0;
  double raw = 0.0;
  double corrected = 0.0;
};

/// Hour-of-day means of measurement, raw model and corrected series at each
/// station over the scope hours. corrected[d] is aligned with obs.hours
/// (NaN where unavailable); hours where any of the three is missing are
/// skipped. DataError when the scope is empty.
std::vector<DiurnalRow> diurnal_profile(const ObservationSet& obs,
                                        const std::vector<std::vector<double>>& corrected,
                                        const std::vector<std::uint8_t>& scope);

std::string scores_csv(const std::vector<ScoreReport>& reports);
std::string diurnal_csv(const std::vector<DiurnalRow>& rows);

/// Fixed-width block with one row per model label and EV / MAE / RMSE
/// columns for each scope present.
std::string summary_table(const std::vector<ScoreReport>& pooled_reports);

}  // namespace aqbias
