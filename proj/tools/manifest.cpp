#include "manifest.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <array>
#include <chrono>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <memory>
#include <sstream>

#include "json.hpp"
#include "sickfuse/errors.hpp"

namespace sickfuse::cli {

namespace fs = std::filesystem;
using nlohmann::json;

std::string sha256_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), EVP_MD_CTX_free);
  EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr);
  std::array<char, 1 << 16> buf{};
  while (in) {
    in.read(buf.data(), buf.size());
    if (in.gcount() > 0) EVP_DigestUpdate(ctx.get(), buf.data(), static_cast<std::size_t>(in.gcount()));
  }
  std::array<unsigned char, EVP_MAX_MD_SIZE> md{};
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx.get(), md.data(), &len);
  std::ostringstream hex;
  for (unsigned int i = 0; i < len; ++i) hex << std::hex << std::setw(2) << std::setfill('0') << int(md[i]);
  return hex.str();
}

std::string utc_now() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::ostringstream s;
  s << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return s.str();
}

void RunManifest::checksum_tree(const fs::path& root) {
  checksums.clear();
  std::vector<fs::path> files;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (e.is_regular_file() && e.path().filename() != "manifest.json") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  for (const auto& f : files) checksums[fs::relative(f, root).generic_string()] = sha256_file(f);
}

void RunManifest::write(const fs::path& root) const {
  json j;
  j["command"] = command;
  j["argv"] = argv;
  j["master_seed"] = master_seed ? json(*master_seed) : json(nullptr);
  j["seeds"] = seeds;
  j["config"] = config;
  j["inputs"] = inputs;
  j["outputs"] = outputs;
  j["started"] = started;
  j["finished"] = finished;
  j["checksums"] = checksums;
  fs::create_directories(root);
  std::ofstream out(root / "manifest.json");
  out << j.dump(2) << '\n';
  if (!out) throw IoError("failed writing " + (root / "manifest.json").string());
}

RunManifest RunManifest::read(const fs::path& file) {
  std::ifstream in(file);
  if (!in) throw IoError("cannot read " + file.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ParseError(file.string() + ": " + e.what());
  }
  RunManifest m;
  m.command = j.at("command").get<std::string>();
  m.argv = j.at("argv").get<std::vector<std::string>>();
  if (!j.at("master_seed").is_null()) m.master_seed = j["master_seed"].get<std::uint64_t>();
  m.seeds = j.at("seeds").get<std::map<std::string, std::uint64_t>>();
  m.config = j.at("config").get<std::map<std::string, std::string>>();
  m.inputs = j.at("inputs").get<std::map<std::string, std::string>>();
  m.outputs = j.at("outputs").get<std::map<std::string, std::string>>();
  m.started = j.at("started").get<std::string>();
  m.finished = j.at("finished").get<std::string>();
  m.checksums = j.at("checksums").get<std::map<std::string, std::string>>();
  return m;
}

}  // namespace sickfuse::cli
