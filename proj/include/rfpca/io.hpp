#pragma once

// CSV ingestion and emission. Numbers are written with 17 significant
// digits so a reload is exact.

#include <Eigen/Dense>
#include <filesystem>
#include <istream>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "rfpca/fpca.hpp"

namespace rfpca {

std::string format_double(double v);

/// Parses a `curve_id,t,x` table. Curves keep first-appearance order and
/// their times are sorted. The domain is [min t, max t] unless given.
SparseFunctionalSample parse_curve_table(std::istream& in,
                                         std::optional<std::pair<double, double>> domain = {});
SparseFunctionalSample read_curve_table(const std::filesystem::path& path,
                                        std::optional<std::pair<double, double>> domain = {});
void write_curve_table(const std::filesystem::path& path, const SparseFunctionalSample& sample);

/// Numeric matrix, one row per line, with an optional header line.
void write_matrix_csv(const std::filesystem::path& path, const Eigen::MatrixXd& m,
                      const std::string& header = {});
Eigen::MatrixXd read_matrix_csv(const std::filesystem::path& path, bool has_header = false);

/// Writes text atomically enough for our purposes: truncate and write.
void write_text(const std::filesystem::path& path, const std::string& text);

}  // namespace rfpca
