#pragma once

#include <string>
#include <vector>

#include "aqbias/measurement.hpp"
#include "aqbias/priors.hpp"

namespace aqbias {

/// Sensor calibrations estimated beforehand, keyed by sensor id.
struct CollocationTable {
  std::vector<std::string> channels;
  std::vector<SensorCalibration> sensors;
};

/// CSV with header sensor, beta, alpha, gamma.<channel> for each channel,
/// sigma. Extra columns are ignored; missing ones are a FormatError.
CollocationTable read_collocation_csv(const std::string& path,
                                      const std::vector<std::string>& channels);

/// Natural-scale starting vector in layout order: sensor parameters from
/// the table, prior means for bias parameters and for sensors the table does
/// not list. Gamma coefficients are matched by channel name. The CLI and
/// fit_observations replace the bias block with default_start.
std::vector<double> init_from_collocation(const ParameterLayout& layout,
                                          const std::vector<Prior>& priors,
                                          const CollocationTable& table);

}  // namespace aqbias
