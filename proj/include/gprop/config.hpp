/*
 * Copyright 2026 The gprop Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include "gprop/common.hpp"

#include <cstdlib>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

namespace gprop {

class ConfigError : public InvalidArgument {
 public:
  ConfigError(std::string key, const std::string& what) : InvalidArgument(what), key_(std::move(key)) {}
  const std::string& key() const { return key_; }

 private:
  std::string key_;
};

// Flat key=value settings with dotted section prefixes ("unfold.alpha=auto").
// Reads are tracked so leftovers can be rejected as unknown keys.
class KeyValueConfig {
 public:
  KeyValueConfig() = default;
  explicit KeyValueConfig(std::map<std::string, std::string> values) : values_(std::move(values)) {}

  static KeyValueConfig parse(std::istream& in, const std::string& source = "<config>") {
    KeyValueConfig cfg;
    std::string line, section;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
      line = trim(line);
      if (line.empty()) continue;
      if (line.front() == '[') {
        if (line.back() != ']') throw ParseError(source, lineno, "unterminated section header");
        section = trim(line.substr(1, line.size() - 2));
        continue;
      }
      const auto eq = line.find('=');
      if (eq == std::string::npos) throw ParseError(source, lineno, "expected key=value");
      std::string key = trim(line.substr(0, eq));
      if (key.empty()) throw ParseError(source, lineno, "empty key");
      if (!section.empty()) key = section + "." + key;
      cfg.values_[key] = trim(line.substr(eq + 1));
    }
    return cfg;
  }

  static KeyValueConfig load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("config", "cannot open config file '" + path + "'");
    return parse(in, path);
  }

  // Applies one "key=value" override.
  void set_assignment(const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0) {
      throw ConfigError(assignment, "override '" + assignment + "' is not key=value");
    }
    values_[trim(assignment.substr(0, eq))] = trim(assignment.substr(eq + 1));
  }

  void set(const std::string& key, const std::string& value) { values_[key] = value; }
  bool has(const std::string& key) const { return values_.count(key) > 0; }

  std::string get_string(const std::string& key, const std::string& fallback) const {
    used_.insert(key);
    const auto it = values_.find(key);
    return it == values_.end() ? fallback : it->second;
  }

  double get_double(const std::string& key, double fallback) const {
    if (!has(key)) {
      used(key);
      return fallback;
    }
    return to_double(key, get_string(key, ""));
  }

  long long get_int(const std::string& key, long long fallback) const {
    if (!has(key)) {
      used(key);
      return fallback;
    }
    const std::string s = get_string(key, "");
    try {
      std::size_t pos = 0;
      const long long v = std::stoll(s, &pos);
      if (pos != s.size()) throw std::invalid_argument(s);
      return v;
    } catch (const std::exception&) {
      throw ConfigError(key, "config key '" + key + "': expected an integer, got '" + s + "'");
    }
  }

  bool get_bool(const std::string& key, bool fallback) const {
    if (!has(key)) {
      used(key);
      return fallback;
    }
    const std::string s = get_string(key, "");
    if (s == "true" || s == "1" || s == "yes" || s == "on") return true;
    if (s == "false" || s == "0" || s == "no" || s == "off") return false;
    throw ConfigError(key, "config key '" + key + "': expected a boolean, got '" + s + "'");
  }

  std::vector<double> get_list(const std::string& key, std::vector<double> fallback) const {
    if (!has(key)) {
      used(key);
      return fallback;
    }
    std::vector<double> out;
    std::stringstream ss(get_string(key, ""));
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(to_double(key, trim(item)));
    return out;
  }

  // Throws on the first key never read.
  void reject_unknown() const {
    for (const auto& [key, value] : values_) {
      if (!used_.count(key)) throw ConfigError(key, "unknown config key '" + key + "'");
    }
  }

  const std::map<std::string, std::string>& values() const { return values_; }

 private:
  static std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
  }

  static double to_double(const std::string& key, const std::string& s) {
    try {
      std::size_t pos = 0;
      const double v = std::stod(s, &pos);
      if (pos != s.size()) throw std::invalid_argument(s);
      return v;
    } catch (const std::exception&) {
      throw ConfigError(key, "config key '" + key + "': expected a number, got '" + s + "'");
    }
  }

  void used(const std::string& key) const { used_.insert(key); }

  std::map<std::string, std::string> values_;
  mutable std::set<std::string> used_;
};

// Output root: UNFOLD_ARTIFACTS wins over the given default.
inline std::string artifacts_dir(const std::string& fallback = "artifacts") {
  if (const char* env = std::getenv("UNFOLD_ARTIFACTS"); env && *env) return env;
  return fallback;
}

}  // namespace gprop
