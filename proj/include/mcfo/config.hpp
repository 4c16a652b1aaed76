#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <set>
#include <string>
#include <vector>

#include "mcfo/lgssm.hpp"
#include "mcfo/models.hpp"

namespace mcfo {

// Flat "section.key" -> value settings read from an INI-style file.
class Settings {
 public:
  static Settings from_file(const std::string& path);
  static Settings from_text(const std::string& text);

  void set(const std::string& key, const std::string& value) { values_[key] = value; }
  // "section.key=value"
  void apply_override(const std::string& assignment);
  bool has(const std::string& key) const { return values_.count(key) > 0; }

  std::string get(const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& key, double fallback) const;
  std::uint64_t get_uint(const std::string& key, std::uint64_t fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  std::vector<double> get_doubles(const std::string& key) const;
  std::vector<std::uint64_t> get_uints(const std::string& key,
                                       std::vector<std::uint64_t> fallback) const;
  std::vector<std::string> get_list(const std::string& key, std::vector<std::string> fallback) const;

  // Throws ConfigError naming the first key outside `allowed` (entries ending
  // in ".*" allow a whole section).
  void check_known(const std::set<std::string>& allowed) const;
  // Canonical "key=value" lines of the keys under the given section prefixes.
  std::string canonical(const std::vector<std::string>& sections) const;

  const std::map<std::string, std::string>& values() const { return values_; }

 private:
  std::map<std::string, std::string> values_;
};

// A model/proposal pair with parameter vectors built from [model] and
// [proposal] settings. A null proposal means the bootstrap proposal.
struct Setup {
  std::unique_ptr<StateSpaceModel> model;
  std::unique_ptr<Proposal> proposal;
  std::vector<double> theta;
  std::vector<double> phi;
  std::string description;

  const Lgssm* lgssm() const { return dynamic_cast<const Lgssm*>(model.get()); }
};

// theta_init: "truth" keeps the configured parameters; "uniform" draws LGSSM
// theta from U(0.1, 0.5) with model.init_seed.
Setup build_setup(const Settings& s);

std::vector<std::string> split_list(const std::string& text);

}  // namespace mcfo
