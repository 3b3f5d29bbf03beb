#pragma once

// key=value config binding shared by the profile, model and training configs.

#include <charconv>
#include <cmath>
#include <cstdint>
#include <functional>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "sickfuse/errors.hpp"
#include "text_util.hpp"

namespace sickfuse::detail {

class KvBinder {
 public:
  using Setter = std::function<void(std::string_view)>;
  using Getter = std::function<std::string()>;

  explicit KvBinder(std::string what) : what_(std::move(what)) {}

  void bind(std::string key, Setter set, Getter get) {
    fields_.push_back({std::move(key), std::move(set), std::move(get)});
  }

  void bind(const std::string& key, double& v) {
    bind(key, [this, &v, key](std::string_view s) { v = to_double(key, s); },
         [&v] { return format_double(v); });
  }

  void bind(const std::string& key, std::size_t& v) {
    bind(key, [this, &v, key](std::string_view s) { v = static_cast<std::size_t>(to_u64(key, s)); },
         [&v] { return std::to_string(v); });
  }

  void bind(const std::string& key, bool& v) {
    bind(key, [this, &v, key](std::string_view s) { v = to_bool(key, s); },
         [&v] { return std::string(v ? "true" : "false"); });
  }

  /// Applies every `key = value` line. '#' starts a comment. Unknown or
  /// repeated keys and malformed lines throw ConfigError.
  void apply(std::string_view text) {
    std::set<std::string, std::less<>> seen;
    std::size_t line_no = 0;
    while (!text.empty()) {
      std::size_t nl = text.find('\n');
      std::string_view line = text.substr(0, nl);
      text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
      ++line_no;
      if (auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
      line = trim(line);
      if (line.empty()) continue;
      auto eq = line.find('=');
      if (eq == std::string_view::npos) {
        throw ConfigError(what_ + " line " + std::to_string(line_no) + ": expected key = value");
      }
      std::string key(trim(line.substr(0, eq)));
      set(key, trim(line.substr(eq + 1)));
      if (!seen.insert(key).second) throw ConfigError(what_ + ": duplicate key '" + key + "'");
    }
  }

  /// Sets a single key (used for command-line overrides).
  void set(const std::string& key, std::string_view value) {
    for (auto& f : fields_) {
      if (f.key == key) {
        f.set(value);
        return;
      }
    }
    throw ConfigError(what_ + ": unknown key '" + key + "'");
  }

  bool has(const std::string& key) const {
    for (const auto& f : fields_) {
      if (f.key == key) return true;
    }
    return false;
  }

  std::vector<std::string> keys() const {
    std::vector<std::string> out;
    for (const auto& f : fields_) out.push_back(f.key);
    return out;
  }

  std::string to_text() const {
    std::string out;
    for (const auto& f : fields_) out += f.key + " = " + f.get() + "\n";
    return out;
  }

  double to_double(const std::string& key, std::string_view s) const {
    double v = 0.0;
    auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (s.empty() || res.ec != std::errc{} || res.ptr != s.data() + s.size() || !std::isfinite(v)) {
      throw ConfigError(what_ + ": " + key + " expects a number, got '" + std::string(s) + "'");
    }
    return v;
  }

  std::uint64_t to_u64(const std::string& key, std::string_view s) const {
    std::uint64_t v = 0;
    auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (s.empty() || res.ec != std::errc{} || res.ptr != s.data() + s.size()) {
      throw ConfigError(what_ + ": " + key + " expects a non-negative integer, got '" + std::string(s) + "'");
    }
    return v;
  }

  bool to_bool(const std::string& key, std::string_view s) const {
    if (s == "true" || s == "1" || s == "yes") return true;
    if (s == "false" || s == "0" || s == "no") return false;
    throw ConfigError(what_ + ": " + key + " expects true/false, got '" + std::string(s) + "'");
  }

  const std::string& what() const { return what_; }

 private:
  struct Field {
    std::string key;
    Setter set;
    Getter get;
  };
  std::string what_;
  std::vector<Field> fields_;
};

}  // namespace sickfuse::detail
