#include <doctest.h>

#include <cmath>
#include <limits>

#include "shambayes/report.hpp"
#include "support.hpp"

using namespace shambayes;
using namespace testsupport;

namespace {

bool same(double a, double b) { return a == b || (std::isnan(a) && std::isnan(b)); }

bool looks_like_svg(const std::string& s) {
  return s.rfind("<svg", 0) == 0 && s.find("</svg>") != std::string::npos && s.find("nan") == std::string::npos;
}

}  // namespace

TEST_CASE("estimate CSV round trip") {
  Rng rng(3);
  const auto e = exposed_only(random_summary(9, rng));
  const auto back = parse_estimates_csv(estimates_csv(e), e.method);
  REQUIRE(back.entries.size() == e.entries.size());
  for (std::size_t j = 0; j < e.entries.size(); ++j) {
    CHECK(back.entries[j].id == e.entries[j].id);
    CHECK(back.entries[j].estimate == e.entries[j].estimate);
    CHECK(back.entries[j].se == e.entries[j].se);
  }
  CHECK_THROWS_AS(parse_estimates_csv("id,est,se\n", Method::difference), ValidationError);
}

TEST_CASE("draws CSV round trip") {
  Rng rng(4);
  Draws d;
  d.names = {"mu_theta", "sigma_theta", "theta[1]"};
  d.chains = 3;
  d.draws = 7;
  for (std::size_t i = 0; i < d.chains * d.draws * 3; ++i) d.values.push_back(std_normal(rng) * 1e-3);
  for (std::size_t i = 0; i < d.chains * d.draws; ++i) d.divergent.push_back(i % 5 == 0);
  d.values[4] = std::numeric_limits<double>::infinity();
  CHECK(parse_draws_csv(draws_csv(d)) == d);
  CHECK_THROWS_AS(parse_draws_csv("chain,iteration,divergent,x\n1,2,0,1\n"), ValidationError);
  CHECK_THROWS_AS(parse_draws_csv("chain,iteration,divergent,x\n1,1,0,1\n2,1,0,1\n2,2,0,1\n"), ValidationError);
}

TEST_CASE("fit summary JSON round trip") {
  Draws d;
  d.names = {"mu_theta", "theta[1]", "b[1]", "c"};
  d.chains = 2;
  d.draws = 50;
  Rng rng(8);
  for (std::size_t i = 0; i < 100; ++i) {
    d.values.push_back(std_normal(rng));
    d.values.push_back(std_normal(rng));
    d.values.push_back(std_normal(rng));
    d.values.push_back(1.0);
  }
  d.divergent.assign(100, 0);
  const auto s = summarize(d, {{"mu_theta", TransformKind::exp}}, {"study-a"});
  REQUIRE(std::isinf(s.find("c")->rhat));
  REQUIRE(std::isnan(s.find("c")->ess_bulk));
  ModelSpec spec;
  SamplerConfig sc;
  const auto back = parse_fit_summary_json(fit_summary_json(s, &spec, &sc));
  REQUIRE(back.params.size() == s.params.size());
  for (std::size_t i = 0; i < s.params.size(); ++i) {
    const auto& a = s.params[i];
    const auto& b = back.params[i];
    CHECK(a.name == b.name);
    for (auto [x, y] : {std::pair{a.mean, b.mean}, {a.sd, b.sd}, {a.q025, b.q025}, {a.q975, b.q975},
                        {a.rhat, b.rhat}, {a.ess_bulk, b.ess_bulk}, {a.mcse_sd, b.mcse_sd}})
      CHECK(same(x, y));
  }
  CHECK(back.studies == s.studies);
  CHECK(back.transformed.size() == 1);
  CHECK(back.converged == s.converged);
  CHECK(back.warnings == s.warnings);
  CHECK_THROWS_AS(parse_fit_summary_json("{"), ValidationError);
  CHECK_THROWS_AS(parse_fit_summary_json("{}"), ValidationError);
}

TEST_CASE("metrics grid CSV layout") {
  SimConfig cfg;
  cfg.theta_fixed = {0.1, 0.2, 0.0, 0.05};
  cfg.estimators = {Method::exposed_only, Method::difference};
  cfg.sigma_b_grid = {0.0, 0.05};
  cfg.replicates = 3;
  const auto g = run_grid(cfg);
  const auto csv = metrics_grid_csv(g);
  CHECK(csv.rfind("sigma_b,estimator,metric,value,n_replicates,n_failed,mc_se,n_used\n", 0) == 0);
  std::size_t rows = 0;
  for (char c : csv) rows += c == '\n';
  CHECK(rows == 1 + 2 * 2 * kNumMetrics);
  CHECK(looks_like_svg(metrics_grid_svg(g, "demo")));
}

TEST_CASE("figures are well formed") {
  Rng rng(21);
  const Dataset d = random_summary(12, rng);
  const auto e = difference(d);
  CHECK(looks_like_svg(estimates_svg(e, classify_significance(e), d.covariates())));
  CHECK(looks_like_svg(estimates_svg(e, classify_significance(e), {})));
  CHECK(looks_like_svg(sham_scatter_svg(d)));
  CHECK(looks_like_svg(sham_scatter_svg(random_counts(4, rng))));
  FitSummary s;
  for (std::size_t j = 0; j < d.size(); ++j) s.studies.push_back({d.id(j), 0.1, 0.02, std::nullopt, std::nullopt});
  CHECK(looks_like_svg(shrinkage_svg(s, exposed_only(d), d.covariates())));
}
