#pragma once

#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "aqbias/calendar.hpp"
#include "aqbias/core.hpp"
#include "aqbias/observations.hpp"

namespace aqbias {

struct SynthSpec;
struct SynthCampaign;

struct DeviceEntry {
  std::string id;
  DeviceKind kind = DeviceKind::station;
  double x = 0.0;
  double y = 0.0;
  std::string path;  // device CSV

  bool operator==(const DeviceEntry&) const = default;
};

/// Canonical channel name and the raw column that feeds it.
struct ChannelSource {
  std::string name;
  std::string column;

  bool operator==(const ChannelSource&) const = default;
};

struct SpatialSource {
  std::string name;
  std::string path;
  /// Bilinear resampling onto the model grid (for coarser rasters such as
  /// elevation). Otherwise the raster must share the model grid geometry.
  bool resample = false;

  bool operator==(const SpatialSource&) const = default;
};

enum class OutsideTraffic { warn, refuse };

/// Everything needed to assemble a campaign. Relative paths resolve against
/// base_dir (the directory of the config file).
struct CampaignConfig {
  std::string base_dir = ".";
  std::vector<DeviceEntry> devices;
  std::vector<ChannelSource> channels;
  std::vector<SpatialSource> spatial;
  std::string temporal_path;
  std::vector<std::string> temporal;
  /// Model-output grids. The glob matches file names in one directory;
  /// when a timestamp pattern (%Y %m %d %H plus literals, applied to the file
  /// name) is given it must agree with the grid header.
  std::string grid_glob;
  std::string timestamp_pattern;
  TrafficWindow window;
  OutsideTraffic outside_traffic = OutsideTraffic::warn;
  std::string crs;

  CovariateLayout layout() const;
  std::vector<std::string> channel_names() const;
  std::string resolve(const std::string& path) const;

  void validate() const;
  nlohmann::json to_json() const;
  static CampaignConfig from_json(const nlohmann::json& j, const std::string& base_dir);

  bool operator==(const CampaignConfig&) const = default;
};

CampaignConfig read_campaign_config(const std::string& path);
void write_campaign_config(const CampaignConfig& config, const std::string& path);

/// Extracts the hour encoded in a file name, or throws FormatError.
Hour parse_timestamp_pattern(const std::string& file_name, const std::string& pattern);
std::string format_timestamp_pattern(Hour h, const std::string& pattern);

struct GridIndex {
  std::vector<Hour> hours;         // sorted
  std::vector<std::string> paths;  // aligned with hours
};

/// Lists the model-output grids matched by the config, sorted by hour.
/// Two files for the same hour are a DataError.
GridIndex list_grids(const CampaignConfig& config);

/// Spatial covariate rasters on the given geometry.
CovariateStack load_covariates(const CampaignConfig& config, const GridGeometry& geometry);

struct Assembly {
  ObservationSet observations;
  CovariateStack covariates;
  GridIndex grids;
  /// Hours with an incomplete record, per device (ordered by id).
  std::vector<std::pair<std::string, std::size_t>> missing_hours;
};

/// Joins grids, covariates and device series on the grid time axis.
Assembly assemble(const CampaignConfig& config);

/// Writes a synthetic campaign as an assemble-able directory: config.json,
/// model/ and latent/ grids, covariates/, devices/, temporal.csv, truth.json
/// and spec.json.
void write_synthetic_campaign(const SynthCampaign& campaign, const SynthSpec& spec,
                              const std::string& dir);

}  // namespace aqbias
