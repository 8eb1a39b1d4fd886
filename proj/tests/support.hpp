#pragma once

#include <filesystem>
#include <random>
#include <string>

#include "aqbias/core.hpp"
#include "aqbias/synth.hpp"

namespace aqbias::test {

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() /
            ("aqbias_" + tag + "_" + std::to_string(rd()) + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::string file(const std::string& name) const { return (path_ / name).string(); }

 private:
  std::filesystem::path path_;
};

inline BiasParameters sample_bias() {
  BiasParameters p = BiasParameters::zeros(3, 2);
  p.a0 = -1.9;
  p.ac = -0.6;
  p.thetaT = {-4.0, -0.002};
  p.zetaS = {-0.25, 0.3, 0.004};
  p.zetaT = {0.3, 0.002};
  p.sigma0 = 15.0;
  return p;
}

// A small campaign that generates in well under a second.
inline SynthSpec small_spec(std::size_t n_hours = 40, std::uint64_t seed = 11) {
  SynthSpec s = SynthSpec::defaults();
  s.geometry = {0.0, 0.0, 10.0, 20, 16};
  s.n_hours = n_hours;
  s.seed = seed;
  s.sensors.resize(3);
  return s;
}

}  // namespace aqbias::test
