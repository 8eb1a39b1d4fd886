#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "aqbias/core.hpp"
#include "aqbias/observations.hpp"

namespace aqbias {

/// Linear sensor response z = beta + alpha * c + gamma . y + eps, with
/// eps ~ N(0, sigma^2) on the raw signal scale. Signals are opaque raw
/// units and are never rescaled.
struct SensorCalibration {
  std::string sensor_id;
  double alpha = 1.0;
  double beta = 0.0;
  std::vector<double> gamma;
  double sigma = 1.0;

  /// alpha = 1, beta = 0, gamma = 0: a reference station.
  static SensorCalibration station(std::size_t q, double sigma0);

  /// alpha < 0, sigma > 0, |gamma| = q, all finite.
  void validate(std::size_t q) const;

  bool operator==(const SensorCalibration&) const = default;
};

double sensor_forward(const SensorCalibration& cal, double c,
                      std::span<const double> y);

/// (z - beta - gamma . y) / alpha. Negative results are returned as-is.
double sensor_invert(const SensorCalibration& cal, double z,
                     std::span<const double> y);

struct RegressionRow {
  std::string device_id;
  DeviceKind kind = DeviceKind::station;
  Hour hour = 0;
  double m = 0.0;
  double z = 0.0;
  std::vector<double> y;   // empty for stations
  std::vector<double> xs;
  std::vector<double> xt;
};

struct RowSet {
  std::vector<RegressionRow> rows;
  /// (device, hour) pairs dropped because some value was missing.
  std::size_t skipped = 0;
};

/// One row per complete (device, hour) pair, ordered by device id then
/// hour.
RowSet build_rows(const ObservationSet& obs);

/// Which density a row contributes.
///  - measurement: z given m, i.e. z ~ N(beta + alpha * C_hat + gamma.y,
///    sigma^2) with C_hat = (m - L0) / (1 + Lc). Stations use (1, 0, 0).
///  - model: m given z with std |1 + Lc| sigma / |alpha|.
///  - model_literal: m given z with std |1 + Lc| sigma.
/// model = measurement - log|1 + Lc| + log|alpha| row by row.
enum class LikelihoodForm { measurement, model, model_literal };

const char* to_string(LikelihoodForm f);
LikelihoodForm parse_likelihood_form(const std::string& text);

/// Gaussian log density of one row. Station rows must be scored with
/// SensorCalibration::station(q, p.sigma0). Throws
/// SingularCorrectionError when |1 + Lc| <= guard.
double loglik_row(const RegressionRow& row, const BiasParameters& p,
                  const SensorCalibration& cal,
                  LikelihoodForm form = LikelihoodForm::model,
                  double guard = kDefaultGuard);

/// Station-only form: mean L0 + z (1 + Lc), std |1 + Lc| sigma0.
double loglik_station_row(const RegressionRow& row, const BiasParameters& p,
                          double guard = kDefaultGuard);

/// Structure-of-arrays copy of a row list, split into per-device segments
/// and fixed-size blocks. Block sums are always combined in the same order,
/// so the serial and parallel kernels agree bit for bit.
class RowTable {
 public:
  static constexpr std::size_t kBlock = 256;

  struct Segment {
    std::string device_id;
    DeviceKind kind = DeviceKind::station;
    std::size_t begin = 0;
    std::size_t end = 0;
    std::size_t first_block = 0;
    std::size_t last_block = 0;  // one past
  };

  struct Block {
    std::size_t segment = 0;
    std::size_t begin = 0;
    std::size_t end = 0;
  };

  RowTable() = default;
  /// Rows are re-sorted by (device id, hour).
  RowTable(std::vector<RegressionRow> rows, std::size_t k, std::size_t l,
           std::size_t q);

  std::size_t size() const { return m_.size(); }
  std::size_t k() const { return k_; }
  std::size_t l() const { return l_; }
  std::size_t q() const { return q_; }

  const std::vector<Segment>& segments() const { return segments_; }
  const std::vector<Block>& blocks() const { return blocks_; }

  double m(std::size_t r) const { return m_[r]; }
  double z(std::size_t r) const { return z_[r]; }
  const double* xs(std::size_t r) const { return xs_.data() + r * k_; }
  const double* xt(std::size_t r) const { return xt_.data() + r * l_; }
  const double* y(std::size_t r) const { return y_.data() + r * q_; }

 private:
  std::size_t k_ = 0, l_ = 0, q_ = 0;
  std::vector<double> m_, z_, xs_, xt_, y_;
  std::vector<Segment> segments_;
  std::vector<Block> blocks_;
};

namespace kernels {

/// Calibration seen by the likelihood kernel for one segment.
struct CalibrationView {
  double alpha = 1.0;
  double beta = 0.0;
  const double* gamma = nullptr;  // q values, or nullptr for stations
  double sigma = 1.0;
};

struct LoglikRequest {
  const RowTable* table = nullptr;
  const BiasParameters* bias = nullptr;
  /// One calibration per segment of the table.
  std::span<const CalibrationView> calibrations;
  LikelihoodForm form = LikelihoodForm::measurement;
  double guard = kDefaultGuard;
};

/// Writes one log-likelihood per requested segment into out (same order as
/// segs). A row with |1 + Lc| <= guard makes its segment -inf.
void segment_loglik_serial(const LoglikRequest& req,
                           std::span<const std::size_t> segs,
                           std::span<double> out);
void segment_loglik_omp(const LoglikRequest& req,
                        std::span<const std::size_t> segs,
                        std::span<double> out);

}  // namespace kernels

}  // namespace aqbias
