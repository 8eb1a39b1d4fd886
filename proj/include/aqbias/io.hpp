#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "aqbias/calendar.hpp"
#include "aqbias/core.hpp"

namespace aqbias {

enum class GridEncoding { ascii, binary };

const char* to_string(GridEncoding e);
GridEncoding parse_grid_encoding(const std::string& text);

/// Grid file: a text header of "key value" lines (nx, ny, origin_x,
/// origin_y, cell_size, timestamp, nodata, clamped, format) closed by a
/// "data" line, then nx * ny values in row-major order. ASCII payloads put
/// one grid row per line; binary payloads are little-endian float64.
void write_grid(const ConcentrationGrid& grid, std::ostream& out,
                GridEncoding encoding = GridEncoding::ascii);
ConcentrationGrid read_grid(std::istream& in, const std::string& source);
void write_grid(const ConcentrationGrid& grid, const std::string& path,
                GridEncoding encoding = GridEncoding::ascii);
ConcentrationGrid read_grid(const std::string& path);

/// Bilinear interpolation between cell centres of `coarse` onto the cell
/// centres of `target`. Every target centre must lie within the hull of the
/// coarse centres (DataError otherwise). A target value touching a nodata
/// coarse cell with nonzero weight becomes nodata.
ConcentrationGrid resample_elevation(const ConcentrationGrid& coarse,
                                     const GridGeometry& target);

/// 1 for hours inside the window.
std::vector<std::uint8_t> traffic_hours_filter(const std::vector<Hour>& hours,
                                               const TrafficWindow& window);

/// One device file: timestamp, value, then raw channel columns.
struct DeviceTable {
  std::vector<Hour> hours;
  std::vector<double> value;
  std::vector<std::string> columns;  // raw channel column names
  std::vector<double> channels;      // hour-major, columns.size() per hour
};

/// Reads the timestamp and value columns plus the requested raw columns (in
/// that order). Duplicate timestamps are a DataError.
DeviceTable read_device_csv(const std::string& path,
                            const std::vector<std::string>& columns);
void write_device_csv(const DeviceTable& table, const std::string& path);

/// Hourly temporal covariates: timestamp followed by one column per name.
struct TemporalTable {
  std::vector<std::string> names;
  std::vector<Hour> hours;
  std::vector<double> values;  // hour-major
};

TemporalTable read_temporal_csv(const std::string& path,
                                const std::vector<std::string>& names);
void write_temporal_csv(const TemporalTable& table, const std::string& path);

}  // namespace aqbias
