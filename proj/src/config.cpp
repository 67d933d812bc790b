#include "rfpca/config.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "rfpca/errors.hpp"

namespace rfpca {

const std::map<std::string, std::string>& RunConfig::defaults() {
  static const std::map<std::string, std::string> table = {
      {"data", ""},        {"out", "."},           {"fit", ""},        {"variant", "rob"},
      {"h_mean", "auto"},  {"h_cov", "auto"},      {"grid", "50"},     {"delta", "auto"},
      {"tau", "0.9"},      {"seed", "1"},          {"jobs", "1"},      {"model", "1"},
      {"eps", "0"},        {"R", "100"},           {"N", "100"},       {"domain_a", ""},
      {"domain_b", ""},    {"folds", "5"},         {"smooth_steps", "2"}, {"reselect", "false"},
  };
  return table;
}

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace

RunConfig RunConfig::parse(const std::string& text) {
  RunConfig cfg;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string body = trim(line.substr(0, line.find('#')));
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos) {
      throw Error(ErrorCode::ParseError, "config line " + std::to_string(line_no) + ": expected 'key = value'");
    }
    cfg.set(trim(body.substr(0, eq)), trim(body.substr(eq + 1)));
  }
  return cfg;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::MissingArtifact, "cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

void RunConfig::set(const std::string& key, const std::string& value) {
  if (!defaults().contains(key)) throw Error(ErrorCode::InvalidArgument, "unknown config key '" + key + "'");
  values_[key] = value;
}

bool RunConfig::has(const std::string& key) const { return values_.contains(key); }

std::string RunConfig::get(const std::string& key) const {
  if (auto it = values_.find(key); it != values_.end()) return it->second;
  if (auto it = defaults().find(key); it != defaults().end()) return it->second;
  throw Error(ErrorCode::InvalidArgument, "unknown config key '" + key + "'");
}

double RunConfig::get_double(const std::string& key) const {
  const std::string text = get(key);
  double v = 0.0;
  const auto res = std::from_chars(text.data(), text.data() + text.size(), v);
  if (text.empty() || res.ec != std::errc() || res.ptr != text.data() + text.size()) {
    throw Error(ErrorCode::InvalidArgument, "config key '" + key + "' is not a number: '" + text + "'");
  }
  return v;
}

long RunConfig::get_int(const std::string& key) const {
  const std::string text = get(key);
  long v = 0;
  const auto res = std::from_chars(text.data(), text.data() + text.size(), v);
  if (text.empty() || res.ec != std::errc() || res.ptr != text.data() + text.size()) {
    throw Error(ErrorCode::InvalidArgument, "config key '" + key + "' is not an integer: '" + text + "'");
  }
  return v;
}

std::optional<double> RunConfig::get_optional_double(const std::string& key) const {
  const std::string text = get(key);
  if (text.empty() || text == "auto") return std::nullopt;
  return get_double(key);
}

void RunConfig::merge(const RunConfig& other) {
  for (const auto& [k, v] : other.values_) values_[k] = v;
}

std::optional<std::pair<double, double>> RunConfig::domain() const {
  const bool a = !get("domain_a").empty();
  const bool b = !get("domain_b").empty();
  if (a != b) throw Error(ErrorCode::InvalidArgument, "domain needs both domain_a and domain_b");
  if (!a) return std::nullopt;
  return std::make_pair(get_double("domain_a"), get_double("domain_b"));
}

FitConfig RunConfig::fit_config() const {
  FitConfig fc;
  fc.variant = parse_variant(get("variant"));
  fc.h_mean = get_optional_double("h_mean");
  fc.h_cov = get_optional_double("h_cov");
  fc.grid_size = static_cast<int>(get_int("grid"));
  fc.delta = get_optional_double("delta");
  fc.tau = get_double("tau");
  fc.seed = static_cast<std::uint64_t>(get_int("seed"));
  fc.cv_folds = static_cast<int>(get_int("folds"));
  fc.smooth_steps = get_double("smooth_steps");
  fc.domain = domain();
  return fc;
}

MonteCarloConfig RunConfig::monte_carlo_config() const {
  MonteCarloConfig mc;
  mc.model = static_cast<int>(get_int("model"));
  mc.eps = get_double("eps");
  mc.replications = static_cast<int>(get_int("R"));
  mc.num_curves = static_cast<int>(get_int("N"));
  mc.seed = static_cast<std::uint64_t>(get_int("seed"));
  mc.jobs = static_cast<int>(get_int("jobs"));
  const std::string reselect = get("reselect");
  if (reselect != "true" && reselect != "false") {
    throw Error(ErrorCode::InvalidArgument, "reselect must be true or false");
  }
  mc.reselect_bandwidths = reselect == "true";
  RunConfig copy = *this;
  if (get("variant") == "both") copy.set("variant", "rob");
  mc.fit = copy.fit_config();
  mc.variant = mc.fit.variant;
  return mc;
}

std::string RunConfig::serialize() const {
  std::string out;
  for (const auto& [k, def] : defaults()) out += k + " = " + get(k) + "\n";
  return out;
}

}  // namespace rfpca
