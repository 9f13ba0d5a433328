#pragma once

#include <cstdint>
#include <cstdio>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "rfi/io.hpp"
#include "rfi/linalg.hpp"

namespace rfi {

/// Flat key=value experiment configuration. Unknown keys are rejected so a
/// typo cannot silently fall back to a default. The canonical string (keys
/// sorted) and its hash are embedded in every output for provenance.
class ExperimentConfig {
 public:
  static const std::set<std::string>& known_keys() {
    static const std::set<std::string> keys = {
        "dataset.d",         "dataset.n",          "dataset.cov",
        "dataset.sigma",     "dataset.seed",       "dataset.classes",
        "dataset.mode",      "dataset.eval_n",     "dataset.planted",
        "featuremap.kind",   "featuremap.p",       "featuremap.seed",
        "attack.norm",       "attack.epsilon",     "attack.step",
        "attack.iters",      "attack.loss",        "attack.random_start",
        "attack.seed",       "rfi.k",              "rfi.mode",
        "dynamics.eta",      "dynamics.gamma",     "dynamics.tmax",
        "dynamics.trecord",  "ntk.d",              "ntk.n",
        "ntk.deltas",        "ntk.sigma",          "ntk.seed",
        "output.dir",
    };
    return keys;
  }

  void set(const std::string& key, const std::string& value) {
    if (!known_keys().count(key))
      throw value_error("unknown config key: " + key);
    values_[key] = value;
  }

  bool has(const std::string& key) const { return values_.count(key) > 0; }

  std::string get_string(const std::string& key, const std::string& fallback) const {
    auto it = values_.find(key);
    return it == values_.end() ? fallback : it->second;
  }

  double get_double(const std::string& key, double fallback) const {
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    std::size_t used = 0;
    const double v = std::stod(it->second, &used);
    if (used != it->second.size())
      throw value_error("config key " + key + ": not a number: " + it->second);
    return v;
  }

  long get_int(const std::string& key, long fallback) const {
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    std::size_t used = 0;
    const long v = std::stol(it->second, &used);
    if (used != it->second.size())
      throw value_error("config key " + key + ": not an integer: " + it->second);
    return v;
  }

  bool get_bool(const std::string& key, bool fallback) const {
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    if (it->second == "true" || it->second == "1") return true;
    if (it->second == "false" || it->second == "0") return false;
    throw value_error("config key " + key + ": not a boolean: " + it->second);
  }

  std::vector<double> get_double_list(const std::string& key,
                                      const std::vector<double>& fallback) const {
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    std::vector<double> out;
    std::stringstream ss(it->second);
    std::string item;
    while (std::getline(ss, item, ','))
      if (!item.empty()) out.push_back(std::stod(item));
    if (out.empty()) throw value_error("config key " + key + ": empty list");
    return out;
  }

  /// key=value lines sorted by key; comments and whitespace normalized away.
  std::string canonical_string() const {
    std::string out;
    for (const auto& [k, v] : values_) out += k + "=" + v + "\n";
    return out;
  }

  std::string content_hash() const {
    // FNV-1a 64-bit
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : canonical_string()) {
      h ^= c;
      h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
  }

  static ExperimentConfig parse(const std::string& text) {
    ExperimentConfig cfg;
    std::stringstream ss(text);
    std::string line;
    int lineno = 0;
    while (std::getline(ss, line)) {
      ++lineno;
      const auto first = line.find_first_not_of(" \t\r");
      if (first == std::string::npos) continue;
      if (line[first] == '#') continue;
      const auto eq = line.find('=');
      if (eq == std::string::npos)
        throw value_error("config line " + std::to_string(lineno) + ": expected key=value");
      auto trim = [](std::string s) {
        const auto a = s.find_first_not_of(" \t\r");
        const auto b = s.find_last_not_of(" \t\r");
        return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
      };
      cfg.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
    return cfg;
  }

  static ExperimentConfig load(const std::string& path) {
    return parse(read_file(path));
  }

  const std::map<std::string, std::string>& values() const { return values_; }

 private:
  std::map<std::string, std::string> values_;
};

}  // namespace rfi
