#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace sickfuse::cli {

/// Hex SHA-256 of a file's bytes.
std::string sha256_file(const std::filesystem::path& path);

/// What a command ran with and what it wrote; `manifest.json` at the run root.
struct RunManifest {
  std::string command;
  std::vector<std::string> argv;
  std::optional<std::uint64_t> master_seed;
  std::map<std::string, std::uint64_t> seeds;  // purpose -> seed actually used
  std::map<std::string, std::string> config;   // name -> key=value text
  std::map<std::string, std::string> inputs;   // role -> path
  std::map<std::string, std::string> outputs;  // role -> path
  std::string started;
  std::string finished;
  std::map<std::string, std::string> checksums;  // path relative to run root -> sha256

  /// Hashes every regular file under `root` except the manifest itself.
  void checksum_tree(const std::filesystem::path& root);
  void write(const std::filesystem::path& root) const;
  static RunManifest read(const std::filesystem::path& file);
};

/// UTC wall clock, ISO 8601.
std::string utc_now();

}  // namespace sickfuse::cli
