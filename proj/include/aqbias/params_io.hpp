#pragma once

#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "aqbias/core.hpp"
#include "aqbias/measurement.hpp"
#include "aqbias/sampler.hpp"

namespace aqbias {

/// Fitted (or true) parameters as persisted on disk. Coefficient arrays are
/// stored next to the covariate and channel names they belong to, and
/// reading checks those names against the expected layout.
struct ParameterFile {
  CovariateLayout layout;
  std::vector<std::string> channels;
  BiasParameters bias;
  std::vector<SensorCalibration> sensors;
  std::string estimate;  // "mean", "mode", "gls", "truth", ...

  bool operator==(const ParameterFile&) const = default;
};

nlohmann::json bias_to_json(const BiasParameters& p, const CovariateLayout& layout);
BiasParameters bias_from_json(const nlohmann::json& j, const CovariateLayout& layout);

nlohmann::json calibration_to_json(const SensorCalibration& c,
                                   const std::vector<std::string>& channels);
SensorCalibration calibration_from_json(const nlohmann::json& j,
                                        const std::vector<std::string>& channels);

nlohmann::json to_json(const ParameterFile& f);
ParameterFile parameter_file_from_json(const nlohmann::json& j);

void write_parameter_file(const ParameterFile& f, const std::string& path);
ParameterFile read_parameter_file(const std::string& path);

/// Reads a JSON document; FormatError on I/O or syntax problems.
nlohmann::json read_json_file(const std::string& path);
void write_json_file(const nlohmann::json& j, const std::string& path);

/// Columnar draw file: chain, iter, then one column per parameter name.
void write_draws_csv(const ChainResult& chains, const std::string& path);
/// Reads draws back for a known layout (FormatError when the columns
/// differ) and recomputes the summaries.
ChainResult read_draws_csv(const std::string& path, const ParameterLayout& layout);

}  // namespace aqbias
