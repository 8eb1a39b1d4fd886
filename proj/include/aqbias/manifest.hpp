#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

namespace aqbias {

/// SHA-1 of "blob <size>\0<content>", as git hash-object prints it.
std::string git_blob_sha1(std::string_view content);
std::string git_blob_sha1_file(const std::string& path);

/// Record of one CLI run. Output hashes are collected from the run
/// directory when the manifest is written, so it must be written last.
struct RunManifest {
  std::string command;
  std::vector<std::string> arguments;
  std::string config_path;
  std::uint64_t seed = 0;
  std::vector<std::pair<std::string, std::string>> inputs;   // path, hash
  std::vector<std::pair<std::string, std::string>> outputs;  // relative path, hash
  std::string output_dir;
  double seconds = 0.0;

  void add_input(const std::string& path);
  nlohmann::json to_json() const;
  /// Hashes every file under output_dir (except manifest.json) and writes
  /// output_dir/manifest.json.
  void write();
};

}  // namespace aqbias
