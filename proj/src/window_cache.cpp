#include "sickfuse/window_cache.hpp"

#include <fstream>

#include "sickfuse/binary_io.hpp"
#include "sickfuse/errors.hpp"

namespace sickfuse {

namespace fs = std::filesystem;

void write_window_file(const WindowData& window, const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  write_magic(out, kWindowCacheMagic);
  write_u64(out, window.id.size());
  out.write(window.id.data(), static_cast<std::streamsize>(window.id.size()));
  write_named_tensor(out, "label", Tensor({2}, {window.t_report, window.fms}));
  write_named_tensor(out, "eye", window.eye);
  write_named_tensor(out, "head", window.head);
  for (const auto& [m, t] : window.frames) write_named_tensor(out, to_string(m), t);
  if (!out) throw IoError("failed writing " + path.string());
}

WindowData read_window_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MissingStreamError("missing window file " + path.string());
  expect_magic(in, kWindowCacheMagic, path.filename().string());
  const std::uint64_t n = read_u64(in);
  if (n > 4096) throw ParseError(path.filename().string() + ": implausible id length");
  WindowData w;
  w.id.resize(n);
  if (!in.read(w.id.data(), static_cast<std::streamsize>(n))) throw ParseError("truncated window id");
  const auto at = w.id.rfind('@');
  const auto sep = w.id.rfind('_', at);
  if (at == std::string::npos || sep == std::string::npos) throw ParseError("malformed window id " + w.id);
  w.session_id = w.id.substr(0, at);
  w.participant = w.id.substr(0, sep);
  w.simulation = parse_simulation(std::string_view(w.id).substr(sep + 1, at - sep - 1));
  bool have_label = false;
  while (auto rec = read_named_tensor(in)) {
    if (rec->name == "label") {
      if (rec->value.size() != 2) throw ParseError("label record must hold 2 values");
      w.t_report = rec->value[0];
      w.fms = rec->value[1];
      have_label = true;
    } else if (rec->name == "eye") {
      w.eye = std::move(rec->value);
    } else if (rec->name == "head") {
      w.head = std::move(rec->value);
    } else {
      Modality m;
      try {
        m = parse_modality(rec->name);
      } catch (const ConfigError&) {
        throw ParseError(path.filename().string() + ": unknown record '" + rec->name + "'");
      }
      w.frames[m] = std::move(rec->value);
    }
  }
  if (!have_label || w.eye.empty() || w.head.empty()) {
    throw ParseError(path.filename().string() + ": missing label/eye/head record");
  }
  return w;
}

fs::path window_file(const fs::path& cache_dir, const std::string& window_id) {
  return cache_dir / "windows" / (window_id + ".sfw");
}

void write_window_cache(const fs::path& cache_dir, const std::vector<WindowData>& windows,
                        const std::vector<WindowIndexRow>& index) {
  fs::create_directories(cache_dir / "windows");
  for (const auto& w : windows) write_window_file(w, window_file(cache_dir, w.id));
  write_window_index(index, cache_dir / "windows.csv");
}

std::vector<WindowData> read_window_cache(const fs::path& cache_dir) {
  const auto rows = read_window_index(cache_dir / "windows.csv");
  std::vector<WindowData> out;
  for (const auto& r : rows) {
    if (r.dropped) continue;
    out.push_back(read_window_file(window_file(cache_dir, window_id(r.session, r.t_report))));
  }
  return out;
}

}  // namespace sickfuse
