#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "aqbias/calendar.hpp"
#include "aqbias/core.hpp"

namespace aqbias {

enum class DeviceKind { station, sensor };

const char* to_string(DeviceKind kind);
DeviceKind parse_device_kind(const std::string& text);

/// Canonical sensor channel order: NO, CO, Ox, RH, T.
std::vector<std::string> rouen_channels();

struct DeviceSeries {
  std::string id;
  DeviceKind kind = DeviceKind::station;
  double x = 0.0;
  double y = 0.0;
  std::size_t cell = 0;
  /// Spatial covariates sampled at the device cell (constant over time).
  std::vector<double> xs;
  /// Per time index; NaN marks a missing value.
  std::vector<double> z;
  std::vector<double> m;
  /// Sensor-side covariates, time-major with q values per hour. Empty for
  /// stations.
  std::vector<double> channels;
  /// 1 where z, m and every channel are present.
  std::vector<std::uint8_t> mask;

  bool operator==(const DeviceSeries&) const;
};

/// Time-aligned join of model output, measurements and covariates at the
/// device locations. Devices are ordered by id.
struct ObservationSet {
  CovariateLayout layout;
  std::vector<std::string> channel_names;
  std::vector<Hour> hours;
  /// Temporal covariates, hour-major with l values per hour.
  std::vector<double> xt;
  std::vector<DeviceSeries> devices;

  std::size_t q() const { return channel_names.size(); }
  std::size_t n_hours() const { return hours.size(); }
  const double* xt_at(std::size_t t) const { return xt.data() + t * layout.l(); }

  /// Recomputes every device mask from the NaN pattern.
  void refresh_masks();
  /// Returns a copy keeping only the listed hour indices.
  ObservationSet subset_hours(const std::vector<std::size_t>& keep) const;

  bool operator==(const ObservationSet&) const;
};

}  // namespace aqbias
