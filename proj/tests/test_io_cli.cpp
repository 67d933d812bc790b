#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "rfpca/cli.hpp"
#include "rfpca/config.hpp"
#include "rfpca/errors.hpp"
#include "rfpca/io.hpp"
#include "rfpca/simulation.hpp"

using namespace rfpca;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("rfpca_test_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

int cli(std::vector<std::string> args, std::string* out_text = nullptr, std::string* err_text = nullptr) {
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  if (out_text) *out_text = out.str();
  if (err_text) *err_text = err.str();
  return code;
}

ErrorCode parse_error_code(const std::string& text) {
  std::istringstream in(text);
  try {
    (void)parse_curve_table(in);
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected a parse failure");
  return ErrorCode::InvalidArgument;
}

// Scores keyed by (curve_id, k).
std::map<std::pair<std::string, int>, double> read_scores(const fs::path& p) {
  std::ifstream in(p);
  std::string line;
  std::getline(in, line);
  std::map<std::pair<std::string, int>, double> out;
  while (std::getline(in, line)) {
    std::istringstream row(line);
    std::string id, k, v;
    std::getline(row, id, ',');
    std::getline(row, k, ',');
    std::getline(row, v, ',');
    out[{id, std::stoi(k)}] = std::stod(v);
  }
  return out;
}

}  // namespace

TEST_SUITE("io_cli") {
  TEST_CASE("ingest a small table") {
    std::istringstream in("curve_id,t,x\nA,0.5,1.0\nA,0.1,2.0\nA,0.3,3.0\n");
    const auto s = parse_curve_table(in);
    REQUIRE(s.size() == 1);
    CHECK(s.curves[0].id == "A");
    CHECK(s.curves[0].times == std::vector<double>{0.1, 0.3, 0.5});
    CHECK(s.curves[0].values == std::vector<double>{2.0, 3.0, 1.0});
    CHECK(s.a == 0.1);
    CHECK(s.b == 0.5);
    std::istringstream in2("curve_id,t,x\nB,1,1\nA,2,2\nB,3,3\n");
    const auto s2 = parse_curve_table(in2, std::make_pair(0.0, 5.0));
    CHECK(s2.curves[0].id == "B");
    CHECK(s2.curves[1].id == "A");
    CHECK(s2.a == 0.0);
    CHECK(s2.b == 5.0);
  }

  TEST_CASE("ingest errors") {
    CHECK(parse_error_code("") == ErrorCode::EmptyFile);
    CHECK(parse_error_code("curve_id,t,x\n") == ErrorCode::EmptyFile);
    CHECK(parse_error_code("id,time,value\nA,1,2\n") == ErrorCode::ParseError);
    CHECK(parse_error_code("curve_id,t,x\nA,1,2\nA,1,3\n") == ErrorCode::DuplicateTime);
    CHECK(parse_error_code("curve_id,t,x\nA,inf,2\n") == ErrorCode::ParseError);
    std::istringstream bad("curve_id,t,x\nA,1,2\nA,abc,3\n");
    try {
      (void)parse_curve_table(bad);
      FAIL("expected ParseError");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::ParseError);
      CHECK(std::string(e.what()).find("line 3") != std::string::npos);
    }
  }

  TEST_CASE("curve tables and matrices round-trip exactly") {
    const auto dir = scratch("roundtrip");
    const auto sim = generate_model2(25, 3);
    write_curve_table(dir / "c.csv", sim.sample);
    const auto back = read_curve_table(dir / "c.csv", std::make_pair(sim.sample.a, sim.sample.b));
    CHECK(back == sim.sample);
    write_curve_table(dir / "c2.csv", back);
    CHECK(slurp(dir / "c.csv") == slurp(dir / "c2.csv"));

    Eigen::MatrixXd m(3, 2);
    m << 0.1, 1.0 / 3.0, -2.5e-300, 1e300, M_PI, std::exp(1.0);
    write_matrix_csv(dir / "m.csv", m, "a,b");
    CHECK(read_matrix_csv(dir / "m.csv", true) == m);
    for (double v : {0.1, 1.0 / 3.0, -1e-310, 123456789.123456789}) CHECK(std::strtod(format_double(v).c_str(), nullptr) == v);
  }

  TEST_CASE("run config") {
    auto c = RunConfig::parse("# comment\nvariant = ls\ntau = 0.8\n\nh_mean = 0.5\n");
    CHECK(c.get("variant") == "ls");
    CHECK(c.get_double("tau") == 0.8);
    CHECK(c.get("grid") == "50");
    CHECK(c.fit_config().variant == Variant::LeastSquares);
    CHECK(*c.fit_config().h_mean == 0.5);
    CHECK_FALSE(c.fit_config().h_cov.has_value());
    CHECK_THROWS_AS(RunConfig::parse("bogus = 1\n"), Error);
    RunConfig flags;
    flags.set("tau", "0.95");
    c.merge(flags);
    CHECK(c.get_double("tau") == 0.95);
    CHECK(c.get("variant") == "ls");
    const auto again = RunConfig::parse(c.serialize());
    CHECK(again.serialize() == c.serialize());
  }

  TEST_CASE("fit command artifacts") {
    const auto dir = scratch("fit");
    const auto sim = generate_model1(80, 14);
    write_curve_table(dir / "data.csv", sim.sample);
    std::string out, err;
    REQUIRE(cli({"fit", "--data", (dir / "data.csv").string(), "--domain", "0", "10", "--out", (dir / "rob").string()},
                &out, &err) == 0);
    for (const char* f : {"mean.csv", "cov.csv", "eigen.csv", "scores.csv", "fitted.csv", "manifest.txt"}) {
      CHECK(fs::exists(dir / "rob" / f));
    }
    const Eigen::MatrixXd cov = read_matrix_csv(dir / "rob" / "cov.csv");
    CHECK(cov.rows() == 50);
    CHECK(cov == cov.transpose());
    CHECK(slurp(dir / "rob" / "mean.csv").rfind("t,mu\n", 0) == 0);

    // Same inputs: identical CSV bytes.
    REQUIRE(cli({"fit", "--data", (dir / "data.csv").string(), "--domain", "0", "10", "--out", (dir / "rob2").string()}) == 0);
    for (const char* f : {"mean.csv", "cov.csv", "eigen.csv", "scores.csv", "fitted.csv"}) {
      CHECK(slurp(dir / "rob" / f) == slurp(dir / "rob2" / f));
    }

    REQUIRE(cli({"fit", "--data", (dir / "data.csv").string(), "--domain", "0", "10", "--variant", "ls", "--out",
                 (dir / "ls").string()}) == 0);
    auto rob = read_manifest(dir / "rob" / "manifest.txt");
    auto ls = read_manifest(dir / "ls" / "manifest.txt");
    std::vector<std::string> differing;
    for (const auto& [k, v] : rob) {
      if (k.rfind("resolved.", 0) == 0 || k == "wall_time_seconds" || k == "out") continue;
      if (ls[k] != v) differing.push_back(k);
    }
    CHECK(differing == std::vector<std::string>{"variant"});
    CHECK(rob["version"] == kVersion);
    CHECK(rob.count("seed") == 1);
  }

  TEST_CASE("predict on the training data reproduces the fit scores") {
    const auto dir = scratch("predict_same");
    const auto sim = generate_model1(60, 15);
    write_curve_table(dir / "data.csv", sim.sample);
    REQUIRE(cli({"fit", "--data", (dir / "data.csv").string(), "--domain", "0", "10", "--h-mean", "0.6", "--h-cov",
                 "1.5", "--out", (dir / "fit").string()}) == 0);
    REQUIRE(cli({"predict", "--fit", (dir / "fit").string(), "--data", (dir / "data.csv").string(), "--out",
                 (dir / "pred").string()}) == 0);
    CHECK(slurp(dir / "fit" / "scores.csv") == slurp(dir / "pred" / "scores.csv"));
    CHECK(slurp(dir / "fit" / "fitted.csv") == slurp(dir / "pred" / "fitted.csv"));

    // A curve sitting on the fitted mean scores zero.
    const Eigen::MatrixXd mean = read_matrix_csv(dir / "fit" / "mean.csv", true);
    std::ofstream on_mean(dir / "on_mean.csv");
    on_mean << "curve_id,t,x\n";
    for (int m : {3, 17, 40}) on_mean << "z," << format_double(mean(m, 0)) << "," << format_double(mean(m, 1)) << "\n";
    on_mean.close();
    REQUIRE(cli({"predict", "--fit", (dir / "fit").string(), "--data", (dir / "on_mean.csv").string(), "--out",
                 (dir / "zero").string()}) == 0);
    for (const auto& [key, v] : read_scores(dir / "zero" / "scores.csv")) CHECK(v == 0.0);
  }

  TEST_CASE("predict reports missing artifacts and clamps times") {
    const auto dir = scratch("predict_missing");
    std::string err;
    CHECK(cli({"predict", "--fit", (dir / "nothing").string(), "--data", (dir / "x.csv").string()}, nullptr, &err) == 1);
    CHECK(err.find("MissingArtifact") != std::string::npos);

    const auto sim = generate_model1(40, 1);
    write_curve_table(dir / "data.csv", sim.sample);
    REQUIRE(cli({"fit", "--data", (dir / "data.csv").string(), "--domain", "0", "10", "--h-mean", "0.8", "--h-cov",
                 "1.5", "--out", (dir / "fit").string()}) == 0);
    std::ofstream outside(dir / "outside.csv");
    outside << "curve_id,t,x\nq,-1,3\nq,5,6\nq,12,9\n";
    outside.close();
    std::string out;
    CHECK(cli({"predict", "--fit", (dir / "fit").string(), "--data", (dir / "outside.csv").string(), "--out",
               (dir / "pred").string()},
              &out) == 0);
    CHECK(out.find("warning") != std::string::npos);
  }

  TEST_CASE("80/20 held-out reconstruction") {
    const auto dir = scratch("holdout");
    const auto sim = generate_model1(125, 16);
    std::vector<std::size_t> train, test;
    for (std::size_t i = 0; i < sim.sample.size(); ++i) (i % 5 == 4 ? test : train).push_back(i);
    write_curve_table(dir / "train.csv", sim.sample.subset(train));
    write_curve_table(dir / "test.csv", sim.sample.subset(test));
    REQUIRE(cli({"fit", "--data", (dir / "train.csv").string(), "--domain", "0", "10", "--out", (dir / "fit").string()}) == 0);
    REQUIRE(cli({"predict", "--fit", (dir / "fit").string(), "--data", (dir / "test.csv").string(), "--out",
                 (dir / "pred").string()}) == 0);

    auto mse = [&](const fs::path& fitted, const std::vector<std::size_t>& idx) {
      std::map<std::string, std::size_t> row_of;
      for (std::size_t i : idx) row_of[sim.sample.curves[i].id] = i;
      std::ifstream in(fitted);
      std::string line;
      std::getline(in, line);
      double acc = 0.0;
      int n = 0;
      while (std::getline(in, line)) {
        std::istringstream row(line);
        std::string id, t, x;
        std::getline(row, id, ',');
        std::getline(row, t, ',');
        std::getline(row, x, ',');
        const std::size_t i = row_of.at(id);
        const double tt = std::stod(t);
        const double truth = sim.truth.mean(tt) + sim.scores(i, 0) * sim.truth.eigenfunction(0, tt) +
                             sim.scores(i, 1) * sim.truth.eigenfunction(1, tt);
        acc += std::pow(std::stod(x) - truth, 2);
        ++n;
      }
      return acc / n;
    };
    const double in_sample = mse(dir / "fit" / "fitted.csv", train);
    const double held_out = mse(dir / "pred" / "fitted.csv", test);
    CHECK(held_out <= 2.0 * in_sample);
  }

  TEST_CASE("simulate command") {
    const auto dir = scratch("simulate");
    std::string out;
    REQUIRE(cli({"simulate", "--model", "1", "--eps", "0", "--R", "2", "--N", "50", "--seed", "3", "--out",
                 (dir / "a").string()},
                &out) == 0);
    CHECK(out.find("frob_sq") != std::string::npos);
    std::ifstream in(dir / "a" / "replications_rob.csv");
    std::string line;
    std::getline(in, line);
    CHECK(line == "replication,metric,k,value");
    std::map<std::string, int> rows_per_metric;
    while (std::getline(in, line)) {
      std::istringstream row(line);
      std::string r, metric, k;
      std::getline(row, r, ',');
      std::getline(row, metric, ',');
      std::getline(row, k, ',');
      if (k == "0" || k.empty() || metric == "frob_sq") ++rows_per_metric[metric];
    }
    CHECK(rows_per_metric["frob_sq"] == 2);
    REQUIRE(cli({"simulate", "--model", "1", "--eps", "0", "--R", "2", "--N", "50", "--seed", "3", "--out",
                 (dir / "b").string()}) == 0);
    for (const auto& entry : fs::directory_iterator(dir / "a")) {
      const auto name = entry.path().filename();
      if (name.string().rfind("summary", 0) == 0) continue;
      CHECK(slurp(entry.path()) == slurp(dir / "b" / name));
    }
  }

  TEST_CASE("eigen command and error exits") {
    const auto dir = scratch("eigen");
    const auto truth = model1_truth();
    const GridSpec g{0.0, 10.0, 50};
    write_matrix_csv(dir / "cov.csv", truth.surface(g));
    std::string out;
    REQUIRE(cli({"eigen", "--data", (dir / "cov.csv").string(), "--domain", "0", "10", "--out", (dir / "o").string()},
                &out) == 0);
    CHECK(fs::exists(dir / "o" / "eigen.csv"));
    CHECK(out.find("K = 2") != std::string::npos);

    std::string err;
    CHECK(cli({"fit", "--data", (dir / "missing.csv").string()}, nullptr, &err) == 1);
    CHECK_FALSE(err.empty());
    CHECK(cli({"fit", "--bogus"}) != 0);
    CHECK(cli({}) != 0);
  }
}
