#include "aqbias/manifest.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <memory>

#include "aqbias/error.hpp"
#include "aqbias/params_io.hpp"

namespace aqbias {

namespace fs = std::filesystem;

std::string git_blob_sha1(std::string_view content) {
  const std::string header = "blob " + std::to_string(content.size()) + std::string(1, '\0');
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), EVP_MD_CTX_free);
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha1(), nullptr) != 1 ||
      EVP_DigestUpdate(ctx.get(), header.data(), header.size()) != 1 ||
      EVP_DigestUpdate(ctx.get(), content.data(), content.size()) != 1 ||
      EVP_DigestFinal_ex(ctx.get(), digest, &len) != 1)
    throw Error(ErrorFamily::format, "SHA-1 computation failed");
  std::string hex;
  char buf[3];
  for (unsigned int i = 0; i < len; ++i) {
    std::snprintf(buf, sizeof buf, "%02x", digest[i]);
    hex += buf;
  }
  return hex;
}

std::string git_blob_sha1_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path);
  const std::string content((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return git_blob_sha1(content);
}

void RunManifest::add_input(const std::string& path) {
  inputs.emplace_back(path, git_blob_sha1_file(path));
}

nlohmann::json RunManifest::to_json() const {
  nlohmann::json j;
  j["command"] = command;
  j["arguments"] = arguments;
  j["config"] = config_path;
  j["seed"] = seed;
  j["output_dir"] = output_dir;
  j["seconds"] = seconds;
  j["inputs"] = nlohmann::json::array();
  for (const auto& [p, h] : inputs) j["inputs"].push_back({{"path", p}, {"sha1", h}});
  j["outputs"] = nlohmann::json::array();
  for (const auto& [p, h] : outputs) j["outputs"].push_back({{"path", p}, {"sha1", h}});
  return j;
}

void RunManifest::write() {
  outputs.clear();
  const fs::path root(output_dir);
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (!e.is_regular_file()) continue;
    const std::string rel = fs::relative(e.path(), root).generic_string();
    if (rel == "manifest.json") continue;
    outputs.emplace_back(rel, git_blob_sha1_file(e.path().string()));
  }
  std::sort(outputs.begin(), outputs.end());
  write_json_file(to_json(), (root / "manifest.json").string());
}

}  // namespace aqbias
