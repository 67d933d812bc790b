#pragma once

// Flat `key = value` run configuration shared by the CLI commands.

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "rfpca/fpca.hpp"
#include "rfpca/simulation.hpp"

namespace rfpca {

class RunConfig {
 public:
  /// Every accepted key, with its default ("" = unset).
  static const std::map<std::string, std::string>& defaults();

  static RunConfig parse(const std::string& text);
  static RunConfig load(const std::filesystem::path& path);

  /// Rejects unknown keys.
  void set(const std::string& key, const std::string& value);
  bool has(const std::string& key) const;
  std::string get(const std::string& key) const;
  double get_double(const std::string& key) const;
  long get_int(const std::string& key) const;
  std::optional<double> get_optional_double(const std::string& key) const;

  /// Overlay `other`'s explicitly set keys on top of this config.
  void merge(const RunConfig& other);

  FitConfig fit_config() const;
  MonteCarloConfig monte_carlo_config() const;
  std::optional<std::pair<double, double>> domain() const;

  /// Sorted `key = value` lines for every key, defaults included.
  std::string serialize() const;

 private:
  std::map<std::string, std::string> values_;
};

}  // namespace rfpca
