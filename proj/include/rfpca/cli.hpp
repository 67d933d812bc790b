#pragma once

#include <filesystem>
#include <map>
#include <ostream>
#include <string>
#include <vector>

#include "rfpca/config.hpp"

namespace rfpca {

inline constexpr const char* kVersion = "0.1.0";

/// Fits the data named by `data` and writes mean.csv, cov.csv, eigen.csv,
/// scores.csv, fitted.csv and manifest.txt into `out`.
void cmd_fit(const RunConfig& config, std::ostream& log);

/// Scores and reconstructions for the curves in `data` from the artifacts
/// in `fit`, written to `out`.
void cmd_predict(const RunConfig& config, std::ostream& log);

/// Monte Carlo study; `variant` may also be "both".
void cmd_simulate(const RunConfig& config, std::ostream& log);

/// Eigen-analysis of a stored surface (`data` = cov.csv, domain required).
void cmd_eigen(const RunConfig& config, std::ostream& log);

std::map<std::string, std::string> read_manifest(const std::filesystem::path& path);

/// Entry point for the `rfpca` executable. Returns the process exit code.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace rfpca
