#pragma once

#include <stdexcept>
#include <string>

namespace aqbias {

// Error families map one-to-one onto CLI exit codes.
enum class ErrorFamily {
  config = 2,         // bad dimensions, flags, malformed config
  format = 3,         // unreadable or malformed files
  data = 4,           // identifiability, rank deficiency, insufficient data
  singular = 5,       // |1 + Lc| below the guard during correction
  sampler = 6,        // MCMC diagnostics (e.g. a coordinate never accepts)
};

class Error : public std::runtime_error {
 public:
  Error(ErrorFamily family, const std::string& what)
      : std::runtime_error(what), family_(family) {}

  ErrorFamily family() const noexcept { return family_; }
  int exit_code() const noexcept { return static_cast<int>(family_); }

 private:
  ErrorFamily family_;
};

struct ConfigError : Error {
  explicit ConfigError(const std::string& w) : Error(ErrorFamily::config, w) {}
};
struct FormatError : Error {
  explicit FormatError(const std::string& w) : Error(ErrorFamily::format, w) {}
};
struct DataError : Error {
  explicit DataError(const std::string& w) : Error(ErrorFamily::data, w) {}
};
struct SingularCorrectionError : Error {
  explicit SingularCorrectionError(const std::string& w)
      : Error(ErrorFamily::singular, w) {}
};
struct SamplerError : Error {
  explicit SamplerError(const std::string& w) : Error(ErrorFamily::sampler, w) {}
};

}  // namespace aqbias
