#include "rfpca/cli.hpp"

#include <CLI11.hpp>
#include <chrono>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "rfpca/errors.hpp"
#include "rfpca/io.hpp"
#include "rfpca/simulation.hpp"

namespace fs = std::filesystem;

namespace rfpca {

namespace {

fs::path output_dir(const RunConfig& config) {
  fs::path dir = config.get("out");
  fs::create_directories(dir);
  return dir;
}

std::string grid_header(const std::string& lead, int size, const std::string& stem) {
  std::string h = lead;
  for (int m = 1; m <= size; ++m) h += "," + stem + std::to_string(m);
  return h;
}

void write_scores(const fs::path& path, const SparseFunctionalSample& sample, const ScoreMatrix& scores) {
  std::string text = "curve_id,k,score\n";
  for (std::size_t i = 0; i < sample.size(); ++i) {
    for (Eigen::Index k = 0; k < scores.scores.cols(); ++k) {
      text += sample.curves[i].id + "," + std::to_string(k + 1) + "," +
              format_double(scores.scores(static_cast<Eigen::Index>(i), k)) + "\n";
    }
  }
  write_text(path, text);
}

void write_fitted(const fs::path& path, const SparseFunctionalSample& sample, const GridSpec& grid,
                  const Eigen::MatrixXd& fitted) {
  std::string text = "curve_id,t,x_hat\n";
  for (std::size_t i = 0; i < sample.size(); ++i) {
    for (int m = 0; m < grid.size; ++m) {
      text += sample.curves[i].id + "," + format_double(grid.point(m)) + "," +
              format_double(fitted(static_cast<Eigen::Index>(i), m)) + "\n";
    }
  }
  write_text(path, text);
}

void write_eigen(const fs::path& path, const EigenSystem& eigen) {
  const int M = eigen.grid.size;
  Eigen::MatrixXd table(static_cast<Eigen::Index>(eigen.eigenvalues.size()), M + 2);
  for (Eigen::Index k = 0; k < table.rows(); ++k) {
    table(k, 0) = static_cast<double>(k + 1);
    table(k, 1) = eigen.eigenvalues[k];
    table.row(k).tail(M) = eigen.eigenfunctions.col(k).transpose();
  }
  write_matrix_csv(path, table, grid_header("k,lambda", M, "phi_"));
}

EigenSystem read_eigen(const fs::path& path, const GridSpec& grid) {
  const Eigen::MatrixXd table = read_matrix_csv(path, true);
  if (table.cols() != grid.size + 2) throw Error(ErrorCode::SchemaMismatch, "eigen.csv does not match the grid");
  EigenSystem eigen;
  eigen.grid = grid;
  eigen.eigenfunctions.resize(grid.size, table.rows());
  for (Eigen::Index k = 0; k < table.rows(); ++k) {
    eigen.eigenvalues.push_back(table(k, 1));
    eigen.eigenfunctions.col(k) = table.row(k).tail(grid.size).transpose();
    eigen.total_variance += std::max(table(k, 1), 0.0);
  }
  return eigen;
}

const std::string& require(const std::map<std::string, std::string>& m, const std::string& key) {
  auto it = m.find(key);
  if (it == m.end()) throw Error(ErrorCode::SchemaMismatch, "manifest lacks '" + key + "'");
  return it->second;
}

double to_double(const std::string& text) {
  std::size_t used = 0;
  const double v = std::stod(text, &used);
  if (used != text.size()) throw Error(ErrorCode::SchemaMismatch, "not a number: '" + text + "'");
  return v;
}

}  // namespace

std::map<std::string, std::string> read_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::MissingArtifact, "cannot open " + path.string());
  std::map<std::string, std::string> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find(" = ");
    if (eq == std::string::npos) continue;
    out[line.substr(0, eq)] = line.substr(eq + 3);
  }
  return out;
}

void cmd_fit(const RunConfig& config, std::ostream& log) {
  const auto start = std::chrono::steady_clock::now();
  if (config.get("data").empty()) throw Error(ErrorCode::InvalidArgument, "fit needs --data");
  const SparseFunctionalSample sample = read_curve_table(config.get("data"), config.domain());
  const FitConfig fc = config.fit_config();
  const FpcaFit result = fit(sample, fc);
  const GridSpec& grid = result.mean.grid;
  const fs::path dir = output_dir(config);

  Eigen::MatrixXd mean(grid.size, 2);
  for (int m = 0; m < grid.size; ++m) {
    mean(m, 0) = grid.point(m);
    mean(m, 1) = result.mean.values[m];
  }
  write_matrix_csv(dir / "mean.csv", mean, "t,mu");
  write_matrix_csv(dir / "cov.csv", result.surface.values);
  write_eigen(dir / "eigen.csv", result.eigen);
  write_scores(dir / "scores.csv", sample, result.scores);
  const int K = result.eigen.num_components;
  write_fitted(dir / "fitted.csv", sample, grid, reconstruct(result.scores, result.eigen, result.mean, K));

  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  std::string manifest = "# rfpca fit manifest\n";
  manifest += std::string("version = ") + kVersion + "\n";
  manifest += config.serialize();
  manifest += "resolved.domain_a = " + format_double(grid.a) + "\n";
  manifest += "resolved.domain_b = " + format_double(grid.b) + "\n";
  manifest += "resolved.grid = " + std::to_string(grid.size) + "\n";
  manifest += "resolved.h_mean = " + format_double(result.h_mean) + "\n";
  manifest += "resolved.h_cov = " + format_double(result.h_cov) + "\n";
  manifest += "resolved.delta = " + format_double(result.scores.delta) + "\n";
  manifest += "resolved.num_components = " + std::to_string(K) + "\n";
  manifest += "resolved.curves = " + std::to_string(sample.size()) + "\n";
  std::ostringstream wall;
  wall << std::fixed << std::setprecision(3) << seconds;
  manifest += "wall_time_seconds = " + wall.str() + "\n";
  write_text(dir / "manifest.txt", manifest);

  log << "fit: " << sample.size() << " curves, variant " << to_string(result.variant) << ", h_mean "
      << result.h_mean << ", h_cov " << result.h_cov << ", K = " << K << "\n";
}

void cmd_predict(const RunConfig& config, std::ostream& log) {
  if (config.get("fit").empty()) throw Error(ErrorCode::InvalidArgument, "predict needs --fit DIR");
  if (config.get("data").empty()) throw Error(ErrorCode::InvalidArgument, "predict needs --data");
  const fs::path fit_dir = config.get("fit");
  for (const char* name : {"manifest.txt", "mean.csv", "cov.csv", "eigen.csv"}) {
    if (!fs::exists(fit_dir / name)) throw Error(ErrorCode::MissingArtifact, (fit_dir / name).string() + " not found");
  }
  const auto manifest = read_manifest(fit_dir / "manifest.txt");
  GridSpec grid;
  grid.a = to_double(require(manifest, "resolved.domain_a"));
  grid.b = to_double(require(manifest, "resolved.domain_b"));
  grid.size = static_cast<int>(to_double(require(manifest, "resolved.grid")));
  grid.validate();
  const double delta = to_double(require(manifest, "resolved.delta"));
  const int K = static_cast<int>(to_double(require(manifest, "resolved.num_components")));

  const Eigen::MatrixXd mean_table = read_matrix_csv(fit_dir / "mean.csv", true);
  if (mean_table.rows() != grid.size || mean_table.cols() != 2) {
    throw Error(ErrorCode::SchemaMismatch, "mean.csv does not match the grid");
  }
  MeanFunctionEstimate mean;
  mean.grid = grid;
  mean.values.assign(mean_table.col(1).data(), mean_table.col(1).data() + grid.size);
  CovarianceSurface surface;
  surface.grid = grid;
  surface.values = read_matrix_csv(fit_dir / "cov.csv");
  surface.psd_projected = true;
  if (surface.values.rows() != grid.size || surface.values.cols() != grid.size) {
    throw Error(ErrorCode::SchemaMismatch, "cov.csv does not match the grid");
  }
  EigenSystem eigen = read_eigen(fit_dir / "eigen.csv", grid);
  eigen.num_components = K;

  SparseFunctionalSample sample = read_curve_table(config.get("data"), std::make_pair(grid.a, grid.b));
  int clamped = 0;
  for (const auto& c : sample.curves)
    for (double t : c.times) clamped += (t < grid.a || t > grid.b) ? 1 : 0;
  if (clamped > 0) {
    log << "warning: " << clamped << " observation times outside [" << grid.a << ", " << grid.b
        << "] are clamped\n";
  }
  const ScoreMatrix scores = predict_scores(sample, mean, surface, eigen, delta, K);
  const fs::path dir = output_dir(config);
  write_scores(dir / "scores.csv", sample, scores);
  write_fitted(dir / "fitted.csv", sample, grid, reconstruct(scores, eigen, mean, K));
  log << "predict: " << sample.size() << " curves, K = " << K << "\n";
}

namespace {

void write_report(const fs::path& dir, const SimulationReport& report, std::ostream& log) {
  const std::string tag = to_string(report.config.variant);
  const int K = report.config.metric_components;
  const std::vector<std::string> per_k = {"log_loss", "rel_loss", "alignment", "mse", "m2"};

  std::string rows = "replication,metric,k,value\n";
  for (const auto& r : report.rows) {
    if (!r.ok) continue;
    const std::string rep = std::to_string(r.replication);
    rows += rep + ",frob_sq,0," + format_double(r.frob_sq) + "\n";
    rows += rep + ",frob_sq_raw,0," + format_double(r.frob_sq_raw) + "\n";
    rows += rep + ",selected_components,0," + std::to_string(r.selected_components) + "\n";
    for (const auto& name : per_k) {
      const auto& v = name == "log_loss" ? r.log_loss : name == "rel_loss" ? r.rel_loss
                    : name == "alignment" ? r.alignment : name == "mse" ? r.mse : r.m2;
      for (std::size_t k = 0; k < v.size(); ++k) {
        rows += rep + "," + name + "," + std::to_string(k + 1) + "," + format_double(v[k]) + "\n";
      }
    }
  }
  write_text(dir / ("replications_" + tag + ".csv"), rows);

  std::string failures = "replication,error\n";
  for (const auto& r : report.rows) {
    if (!r.ok) failures += std::to_string(r.replication) + ",\"" + r.error + "\"\n";
  }
  write_text(dir / ("failures_" + tag + ".csv"), failures);

  // One series per boxplot panel.
  auto plot = [&](const std::string& metric, int k, const std::string& file) {
    std::string text = "replication,value\n";
    std::size_t idx = 0;
    const auto vals = report.values(metric, k);
    for (const auto& r : report.rows) {
      if (!r.ok) continue;
      if (idx < vals.size()) text += std::to_string(r.replication) + "," + format_double(vals[idx++]) + "\n";
    }
    write_text(dir / file, text);
  };
  plot("frob_sq", 0, "plot_" + tag + "_frob_sq.csv");
  for (int k = 0; k < K; ++k) {
    for (const char* name : {"mse", "m2", "rel_loss", "log_loss", "alignment"}) {
      plot(name, k, "plot_" + tag + "_" + name + "_k" + std::to_string(k + 1) + ".csv");
    }
  }

  std::ostringstream table;
  table << "model " << report.config.model << "  eps " << report.config.eps << "  variant " << tag
        << "  R " << report.config.replications << "  N " << report.config.num_curves << "  h_mean "
        << report.h_mean << "  h_cov " << report.h_cov << "  failures " << report.failures() << "\n";
  table << std::left << std::setw(22) << "metric" << std::right << std::setw(14) << "mean" << std::setw(14)
        << "median" << "\n";
  auto line = [&](const std::string& label, const MetricSummary& s) {
    table << std::left << std::setw(22) << label << std::right << std::fixed << std::setprecision(4)
          << std::setw(14) << s.mean << std::setw(14) << s.median << "\n";
    table.unsetf(std::ios::fixed);
  };
  line("frob_sq", report.summary("frob_sq"));
  line("frob_sq_raw", report.summary("frob_sq_raw"));
  for (int k = 0; k < K; ++k) {
    for (const char* name : {"log_loss", "rel_loss", "alignment", "mse", "m2"}) {
      line(std::string(name) + "[" + std::to_string(k + 1) + "]", report.summary(name, k));
    }
  }
  write_text(dir / ("summary_" + tag + ".txt"), table.str());
  log << table.str();
}

}  // namespace

void cmd_simulate(const RunConfig& config, std::ostream& log) {
  const std::string variant = config.get("variant");
  std::vector<std::string> variants;
  if (variant == "both") variants = {"rob", "ls"};
  else variants = {variant};
  const fs::path dir = output_dir(config);
  for (const auto& v : variants) {
    RunConfig run = config;
    run.set("variant", v);
    const SimulationReport report = run_monte_carlo(run.monte_carlo_config());
    write_report(dir, report, log);
  }
}

void cmd_eigen(const RunConfig& config, std::ostream& log) {
  if (config.get("data").empty()) throw Error(ErrorCode::InvalidArgument, "eigen needs --data cov.csv");
  const auto domain = config.domain();
  if (!domain) throw Error(ErrorCode::InvalidArgument, "eigen needs --domain a b");
  CovarianceSurface surface;
  surface.values = read_matrix_csv(config.get("data"));
  if (surface.values.rows() != surface.values.cols()) throw Error(ErrorCode::SchemaMismatch, "surface is not square");
  if (!surface.values.isApprox(surface.values.transpose(), 1e-12)) {
    throw Error(ErrorCode::SchemaMismatch, "surface is not symmetric");
  }
  surface.grid = {domain->first, domain->second, static_cast<int>(surface.values.rows())};
  surface.grid.validate();
  EigenSystem eigen = eigendecompose(surface);
  eigen.num_components = select_num_components(eigen.eigenvalues, config.get_double("tau"));
  const fs::path dir = output_dir(config);
  write_eigen(dir / "eigen.csv", eigen);
  log << "eigen: K = " << eigen.num_components << ", leading eigenvalues";
  for (std::size_t k = 0; k < std::min<std::size_t>(4, eigen.eigenvalues.size()); ++k) log << " " << eigen.eigenvalues[k];
  log << "\n";
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Robust functional principal components for sparse longitudinal data", "rfpca"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kVersion);

  std::map<std::string, std::string> flags;
  std::string config_path;
  std::vector<double> domain;

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", config_path, "flat key = value config file");
    cmd->add_option("--out", flags["out"], "output directory");
    cmd->add_option("--data", flags["data"], "input CSV");
    cmd->add_option("--domain", domain, "domain endpoints a b")->expected(2);
    cmd->add_option("--tau", flags["tau"], "variance fraction for K");
  };
  auto add_fit = [&](CLI::App* cmd) {
    cmd->add_option("--variant", flags["variant"], "rob or ls");
    cmd->add_option("--h-mean", flags["h_mean"], "mean bandwidth or auto");
    cmd->add_option("--h-cov", flags["h_cov"], "covariance bandwidth or auto");
    cmd->add_option("--grid", flags["grid"], "grid size M");
    cmd->add_option("--delta", flags["delta"], "ridge for score prediction or auto");
    cmd->add_option("--seed", flags["seed"], "random seed");
    cmd->add_option("--folds", flags["folds"], "cross-validation folds");
  };

  auto* fit_cmd = app.add_subcommand("fit", "fit mean, covariance, eigenfunctions and scores");
  add_common(fit_cmd);
  add_fit(fit_cmd);
  auto* predict_cmd = app.add_subcommand("predict", "scores and reconstructions for new curves");
  add_common(predict_cmd);
  predict_cmd->add_option("--fit", flags["fit"], "directory with fit artifacts");
  auto* sim_cmd = app.add_subcommand("simulate", "Monte Carlo study of ROB and LS");
  add_common(sim_cmd);
  add_fit(sim_cmd);
  sim_cmd->add_option("--model", flags["model"], "simulation model 1 or 2");
  sim_cmd->add_option("--eps", flags["eps"], "contamination fraction");
  sim_cmd->add_option("--R", flags["R"], "replications");
  sim_cmd->add_option("--N", flags["N"], "curves per sample");
  sim_cmd->add_option("--jobs", flags["jobs"], "parallel replications");
  sim_cmd->add_option("--reselect", flags["reselect"], "re-run bandwidth selection per replication (true/false)");
  auto* eigen_cmd = app.add_subcommand("eigen", "eigen-analysis of a stored surface");
  add_common(eigen_cmd);

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    std::ostringstream msg_out, msg_err;
    const int code = app.exit(e, msg_out, msg_err);
    out << msg_out.str();
    err << msg_err.str();
    return code;
  }

  try {
    RunConfig config;
    if (!config_path.empty()) config = RunConfig::load(config_path);
    RunConfig overrides;
    for (const auto& [k, v] : flags) {
      if (!v.empty()) overrides.set(k, v);
    }
    if (!domain.empty()) {
      overrides.set("domain_a", format_double(domain[0]));
      overrides.set("domain_b", format_double(domain[1]));
    }
    config.merge(overrides);

    if (fit_cmd->parsed()) cmd_fit(config, out);
    else if (predict_cmd->parsed()) cmd_predict(config, out);
    else if (sim_cmd->parsed()) cmd_simulate(config, out);
    else if (eigen_cmd->parsed()) cmd_eigen(config, out);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

}  // namespace rfpca
