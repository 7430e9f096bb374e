#include <doctest.h>

#include <filesystem>
#include <sstream>

#include <json.hpp>

#include "cli.hpp"
#include "shambayes/detail/text.hpp"
#include "shambayes/report.hpp"

using namespace shambayes;
namespace fs = std::filesystem;

namespace {

const fs::path kData = SHAMBAYES_DATA_DIR;

struct Run {
  int code;
  std::string out, err;
};

Run run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("shambayes_cli_test_" + name);
  fs::remove_all(p);
  return p;
}

std::string slurp(const fs::path& p) { return detail::read_file(p); }

std::size_t data_rows(const std::string& csv) {
  std::size_t n = 0;
  for (char c : csv) n += c == '\n';
  return n - 1;
}

}  // namespace

TEST_CASE("estimate on the bundled chick rows") {
  const auto dir = scratch("estimate");
  const auto r = run({"--out-dir", dir.string(), "estimate", (kData / "table1_partial.csv").string()});
  REQUIRE(r.code == 0);
  CHECK(data_rows(slurp(dir / "exposed-only.csv")) == 4);
  CHECK(data_rows(slurp(dir / "difference.csv")) == 4);
  const auto e = parse_estimates_csv(slurp(dir / "exposed-only.csv"), Method::exposed_only);
  CHECK(e.entries[1].estimate == 0.173);
  CHECK(fs::exists(dir / "difference.svg"));
}

TEST_CASE("estimate rescales sham standard errors") {
  const auto dir = scratch("rescale");
  REQUIRE(run({"--out-dir", dir.string(), "--format", "csv", "estimate", "--rescale-sham-se", "0.74874",
               (kData / "table1_partial.csv").string()})
              .code == 0);
  const auto d = parse_estimates_csv(slurp(dir / "difference.csv"), Method::difference);
  const double s0 = 0.041 * 0.74874;
  CHECK(d.entries[0].se == doctest::Approx(std::sqrt(0.041 * 0.041 + s0 * s0)));
}

TEST_CASE("validation failures exit with code 2") {
  const auto dir = scratch("invalid");
  fs::create_directories(dir);
  detail::write_file(dir / "empty.csv", "id,y1,s1,y0,s0\n");
  const auto r = run({"--out-dir", dir.string(), "estimate", (dir / "empty.csv").string()});
  CHECK(r.code == 2);
  CHECK(r.err.find("J >= 1") != std::string::npos);
  CHECK(run({"--out-dir", dir.string(), "fit", "--variant", "gp-se", (kData / "table3_partial.csv").string()}).code ==
        2);
  CHECK(run({"estimate", (dir / "missing.csv").string()}).code == 2);
  CHECK(run({"frobnicate"}).code == 2);
  CHECK(run({"--out-dir", dir.string(), "adjust", (kData / "table1_partial.csv").string()}).code == 2);
}

TEST_CASE("adjust limits match the classical estimate files") {
  const auto dir = scratch("adjust");
  const auto input = (kData / "table1_partial.csv").string();
  REQUIRE(run({"--out-dir", (dir / "e").string(), "--format", "csv", "estimate", input}).code == 0);
  REQUIRE(run({"--out-dir", (dir / "lo").string(), "--format", "csv", "adjust", "--mu-b", "0", "--sigma-b", "0", input})
              .code == 0);
  REQUIRE(run({"--out-dir", (dir / "hi").string(), "--format", "csv", "adjust", "--mu-b", "0", "--sigma-b", "inf",
               input})
              .code == 0);
  CHECK(slurp(dir / "lo" / "linear-adjust.csv") == slurp(dir / "e" / "exposed-only.csv"));
  CHECK(slurp(dir / "hi" / "linear-adjust.csv") == slurp(dir / "e" / "difference.csv"));
}

TEST_CASE("fit, adjust from the fit, and determinism") {
  const auto dir = scratch("fit");
  const auto input = (kData / "table1_partial.csv").string();
  const std::vector<std::string> common = {"--chains", "2", "--warmup", "300", "--draws", "300", input};
  auto args = std::vector<std::string>{"--out-dir", (dir / "a").string(), "fit", "--prior", "weak"};
  args.insert(args.end(), common.begin(), common.end());
  const auto r1 = run(args);
  REQUIRE((r1.code == 0 || r1.code == 4));
  args[1] = (dir / "b").string();
  const auto r2 = run(args);
  CHECK(r2.code == r1.code);
  CHECK(slurp(dir / "a" / "draws.csv") == slurp(dir / "b" / "draws.csv"));
  CHECK(slurp(dir / "a" / "fit.json") == slurp(dir / "b" / "fit.json"));

  const auto fit = parse_fit_summary_json(slurp(dir / "a" / "fit.json"));
  REQUIRE(run({"--out-dir", (dir / "adj").string(), "--format", "json", "adjust", "--from-fit",
               (dir / "a" / "fit.json").string(), input})
              .code == 0);
  const auto adj = nlohmann::json::parse(slurp(dir / "adj" / "adjustment.json"));
  CHECK(adj["mu_b"].get<double>() == fit.find("mu_b")->mean);
  CHECK(adj["sigma_b"].get<double>() == fit.find("sigma_b")->mean);
}

TEST_CASE("binomial fit on count data") {
  const auto dir = scratch("binomial");
  const auto r = run({"--out-dir", dir.string(), "fit", "--variant", "binomial", "--chains", "2", "--warmup", "300",
                      "--draws", "300", (kData / "table3_partial.csv").string()});
  REQUIRE((r.code == 0 || r.code == 4));
  const auto s = parse_fit_summary_json(slurp(dir / "fit.json"));
  REQUIRE(s.studies.size() == 3);
  CHECK(s.studies[0].id == "george1997");
  CHECK(std::isfinite(s.studies[2].theta_mean));
}

TEST_CASE("diagnose reports the sham chi-square") {
  const auto dir = scratch("diagnose");
  REQUIRE(run({"--out-dir", dir.string(), "diagnose", (kData / "table1_partial.csv").string()}).code == 0);
  const auto j = nlohmann::json::parse(slurp(dir / "chi_square.json"));
  CHECK(j["df"].get<int>() == 4);
  CHECK(j["cdf"].get<double>() >= 0.0);
  CHECK(j["cdf"].get<double>() <= 1.0);
  // The scatter data re-ingest as a summary dataset.
  CHECK(parse_summary_csv(slurp(dir / "sham_scatter.csv")).size() == 4);
}

TEST_CASE("simulate writes one grid per size") {
  const auto dir = scratch("simulate");
  const auto input = (kData / "table1_partial.csv").string();
  REQUIRE(run({"--out-dir", dir.string(), "simulate", "--grid", "0", "-R", "1", "--sizes", "2,3,4", "--estimators",
               "exposed-only,difference", input})
              .code == 0);
  for (int m : {2, 3, 4}) {
    CHECK(fs::exists(dir / ("metrics_M" + std::to_string(m) + ".csv")));
    CHECK(fs::exists(dir / ("metrics_M" + std::to_string(m) + ".svg")));
  }
  REQUIRE(run({"--out-dir", (dir / "t").string(), "simulate", "--theta-source", "raw", "--noise", "t", "--grid",
               "0,0.05", "-R", "5", input})
              .code == 0);
  CHECK(data_rows(slurp(dir / "t" / "metrics_M4.csv")) == 2 * (3 * 4 + 1));
}
