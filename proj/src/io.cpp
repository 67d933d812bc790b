#include "rfpca/io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include "rfpca/errors.hpp"

namespace rfpca {

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::general, 17);
  return std::string(buf, res.ptr);
}

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split(const std::string& line, char sep = ',') {
  std::vector<std::string> out;
  std::string field;
  std::istringstream ss(line);
  while (std::getline(ss, field, sep)) out.push_back(trim(field));
  if (!line.empty() && line.back() == sep) out.emplace_back();
  return out;
}

bool parse_number(const std::string& text, double& out) {
  if (text.empty()) return false;
  const char* first = text.data();
  const char* last = text.data() + text.size();
  if (*first == '+') ++first;
  const auto res = std::from_chars(first, last, out);
  return res.ec == std::errc() && res.ptr == last;
}

}  // namespace

SparseFunctionalSample parse_curve_table(std::istream& in,
                                         std::optional<std::pair<double, double>> domain) {
  std::string line;
  std::size_t line_no = 0;
  bool header_seen = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto fields = split(line);
    if (fields.size() != 3 || fields[0] != "curve_id" || fields[1] != "t" || fields[2] != "x") {
      throw Error(ErrorCode::ParseError, "line " + std::to_string(line_no) + ": expected header 'curve_id,t,x'");
    }
    header_seen = true;
    break;
  }
  if (!header_seen) throw Error(ErrorCode::EmptyFile, "no header row");

  SparseFunctionalSample sample;
  std::map<std::string, std::size_t> index;
  std::map<std::pair<std::size_t, double>, std::size_t> seen;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto fields = split(line);
    if (fields.size() != 3) {
      throw Error(ErrorCode::ParseError, "line " + std::to_string(line_no) + ": expected 3 fields");
    }
    double t = 0.0, x = 0.0;
    if (!parse_number(fields[1], t) || !std::isfinite(t)) {
      throw Error(ErrorCode::ParseError, "line " + std::to_string(line_no) + ": invalid t '" + fields[1] + "'");
    }
    if (!parse_number(fields[2], x) || !std::isfinite(x)) {
      throw Error(ErrorCode::ParseError, "line " + std::to_string(line_no) + ": invalid x '" + fields[2] + "'");
    }
    auto [it, inserted] = index.try_emplace(fields[0], sample.curves.size());
    if (inserted) sample.curves.push_back(Curve{fields[0], {}, {}});
    if (auto [dup, fresh] = seen.try_emplace({it->second, t}, line_no); !fresh) {
      throw Error(ErrorCode::DuplicateTime, "line " + std::to_string(line_no) + ": curve '" + fields[0] +
                                                "' repeats t=" + fields[1] + " (first on line " +
                                                std::to_string(dup->second) + ")");
    }
    auto& c = sample.curves[it->second];
    c.times.push_back(t);
    c.values.push_back(x);
  }
  if (sample.curves.empty()) throw Error(ErrorCode::EmptyFile, "no data rows");

  double lo = INFINITY, hi = -INFINITY;
  for (auto& c : sample.curves) {
    std::vector<std::size_t> order(c.times.size());
    for (std::size_t k = 0; k < order.size(); ++k) order[k] = k;
    std::sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) { return c.times[i] < c.times[j]; });
    Curve sorted{c.id, {}, {}};
    for (std::size_t k : order) {
      sorted.times.push_back(c.times[k]);
      sorted.values.push_back(c.values[k]);
    }
    c = std::move(sorted);
    lo = std::min(lo, c.times.front());
    hi = std::max(hi, c.times.back());
  }
  if (domain) {
    sample.a = domain->first;
    sample.b = domain->second;
  } else {
    sample.a = lo;
    sample.b = hi;
  }
  return sample;
}

SparseFunctionalSample read_curve_table(const std::filesystem::path& path,
                                        std::optional<std::pair<double, double>> domain) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::MissingArtifact, "cannot open " + path.string());
  return parse_curve_table(in, domain);
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::InvalidArgument, "cannot write " + path.string());
  out << text;
}

void write_curve_table(const std::filesystem::path& path, const SparseFunctionalSample& sample) {
  std::string text = "curve_id,t,x\n";
  for (const auto& c : sample.curves) {
    for (std::size_t j = 0; j < c.times.size(); ++j) {
      text += c.id + "," + format_double(c.times[j]) + "," + format_double(c.values[j]) + "\n";
    }
  }
  write_text(path, text);
}

void write_matrix_csv(const std::filesystem::path& path, const Eigen::MatrixXd& m,
                      const std::string& header) {
  std::string text = header.empty() ? std::string() : header + "\n";
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      if (j) text += ',';
      text += format_double(m(i, j));
    }
    text += '\n';
  }
  write_text(path, text);
}

Eigen::MatrixXd read_matrix_csv(const std::filesystem::path& path, bool has_header) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::MissingArtifact, "cannot open " + path.string());
  std::vector<std::vector<double>> rows;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    if (has_header) {
      has_header = false;
      continue;
    }
    std::vector<double> row;
    for (const auto& f : split(line)) {
      double v = 0.0;
      if (!parse_number(f, v)) {
        throw Error(ErrorCode::ParseError, path.filename().string() + " line " + std::to_string(line_no) +
                                               ": invalid number '" + f + "'");
      }
      row.push_back(v);
    }
    if (!rows.empty() && row.size() != rows.front().size()) {
      throw Error(ErrorCode::SchemaMismatch, path.filename().string() + " line " + std::to_string(line_no) +
                                                 ": ragged row");
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw Error(ErrorCode::EmptyFile, path.string() + " is empty");
  Eigen::MatrixXd m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.front().size()));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < rows[i].size(); ++j) m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
  return m;
}

}  // namespace rfpca
