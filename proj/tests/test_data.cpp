#include <doctest.h>

#include <cmath>
#include <limits>

#include "shambayes/classical.hpp"
#include "shambayes/detail/text.hpp"
#include "shambayes/linear_adjust.hpp"
#include "shambayes/stats.hpp"
#include "shambayes/study_data.hpp"
#include "support.hpp"

using namespace shambayes;
using namespace testsupport;

namespace {

const double kInf = std::numeric_limits<double>::infinity();

Dataset table1() {
  return parse_summary_csv(
      "id,x,y1,s1,y0,s0,n1,n0\n"
      "1Hz,1,0.036,0.041,-0.005,0.041,32,32\n"
      "15Hz,15,0.173,0.034,0.013,0.042,36,32\n"
      "30Hz,30,0.107,0.035,0.033,0.032,32,32\n"
      "45Hz,45,0.181,0.052,-0.010,0.032,32,32\n");
}

StudyRecord summary(double y1, double s1, double y0, double s0) {
  static int counter = 0;
  StudyRecord r;
  r.id = "r" + std::to_string(++counter);
  r.y1 = y1;
  r.s1 = s1;
  r.y0 = y0;
  r.s0 = s0;
  return r;
}

}  // namespace

TEST_CASE("summary row parses field by field") {
  const Dataset d = parse_summary_csv("id,x,y1,s1,y0,s0,n1,n0\nf1,1,0.036,0.041,-0.005,0.041,32,32\n");
  REQUIRE(d.size() == 1);
  const auto& r = d.summaries()[0];
  CHECK(r.id == "f1");
  CHECK(*r.x == 1.0);
  CHECK(r.y1 == 0.036);
  CHECK(r.s1 == 0.041);
  CHECK(r.y0 == -0.005);
  CHECK(r.s0 == 0.041);
  CHECK(*r.n1 == 32);
  CHECK(*r.n0 == 32);
}

TEST_CASE("count row parses") {
  const Dataset d = parse_count_csv("id,n1,N1,n0,N0\ngeorge1997,1,7,0,5\n");
  const auto& c = d.counts()[0];
  CHECK(c.n1 == 1);
  CHECK(c.N1 == 7);
  CHECK(c.n0 == 0);
  CHECK(c.N0 == 5);
}

TEST_CASE("invalid rows are rejected") {
  CHECK_THROWS_WITH_AS(parse_summary_csv("id,y1,s1,y0,s0\na,0.1,0,0,0.1\n"),
                       doctest::Contains("standard error must be positive"), ValidationError);
  CHECK_THROWS_AS(parse_summary_csv("id,y1,s1,y0,s0\n"), ValidationError);
  CHECK_THROWS_AS(parse_count_csv("id,n1,N1,n0,N0\na,8,7,0,5\n"), ValidationError);
  CHECK_THROWS_AS(parse_summary_csv("id,y1,s1,y0,s0\na,0.1,nan,0,0.1\n"), ValidationError);
}

TEST_CASE("optional columns may be empty") {
  const Dataset d = parse_summary_csv("id,x,y1,s1,y0,s0,n1,n0\na,,0.1,0.1,0,0.1,,\n");
  CHECK_FALSE(d.summaries()[0].x);
  CHECK_FALSE(d.summaries()[0].n1);
  CHECK_FALSE(d.has_covariate());
}

TEST_CASE("write then ingest is the identity") {
  Rng rng(11);
  for (int rep = 0; rep < 20; ++rep) {
    const Dataset d = random_summary(7, rng, 0.04, rep % 2 == 0);
    CHECK(parse_summary_csv(write_summary_csv(d)) == d);
    CHECK(parse_dataset_json(write_dataset_json(d)) == d);
    const Dataset c = random_counts(5, rng);
    CHECK(parse_count_csv(write_count_csv(c)) == c);
    CHECK(parse_dataset_json(write_dataset_json(c)) == c);
  }
}

TEST_CASE("log-odds worked values") {
  const Dataset d = parse_count_csv("id,n1,N1,n0,N0\ngeorge1997,1,7,0,5\nberman2000,1,10,0,10\nbakim,9,23,1,12\n");
  const Dataset t = log_odds_transform(d);
  const auto& r = t.summaries();
  CHECK(r[0].y0 == doctest::Approx(-2.48491).epsilon(1e-5));
  CHECK(r[0].s0 == doctest::Approx(1.47710).epsilon(1e-5));
  CHECK(r[1].y1 == doctest::Approx(-1.99243).epsilon(1e-5));
  CHECK(r[1].s1 == doctest::Approx(0.87860).epsilon(1e-5));
  CHECK(r[2].y1 == doctest::Approx(-0.92676).epsilon(1e-5));
  CHECK(r[2].s1 == doctest::Approx(0.41741).epsilon(1e-5));
  CHECK(*r[2].n1 == 23);
}

TEST_CASE("log-odds is monotone in the event count") {
  for (int N : {1, 5, 23, 100}) {
    for (auto conv : {LogOddsConvention::paper, LogOddsConvention::haldane_anscombe}) {
      double prev = -kInf;
      for (int n = 0; n <= N; ++n) {
        const auto r = log_odds_transform(CountRecord{"c", n, N, 0, 5}, conv);
        CHECK(r.y1 > prev);
        prev = r.y1;
      }
    }
  }
}

TEST_CASE("chi-square of the sham arm") {
  const Dataset d(std::vector<StudyRecord>{summary(0, 1, 0.1, 0.1), summary(0, 1, -0.2, 0.1)});
  const auto c = sham_chi_square(d);
  CHECK(c.stat == doctest::Approx(5.0));
  CHECK(c.df == 2);
  CHECK(c.cdf == doctest::Approx(1.0 - std::exp(-2.5)).epsilon(1e-10));

  const Dataset z(std::vector<StudyRecord>{summary(0, 1, 0, 0.1), summary(0, 1, 0, 0.2)});
  CHECK(sham_chi_square(z).stat == 0.0);
  CHECK(sham_chi_square(z).cdf == 0.0);
}

TEST_CASE("chi-square is calibrated on null sham data") {
  Rng rng(5);
  const std::size_t J = 38;
  const int R = 400;
  double total = 0.0;
  for (int r = 0; r < R; ++r) {
    std::vector<StudyRecord> rs;
    for (std::size_t j = 0; j < J; ++j) {
      const double s0 = 0.03 + 0.02 * uniform01(rng);
      rs.push_back(summary(0.1, 0.04, s0 * std_normal(rng), s0));
    }
    total += sham_chi_square(Dataset(rs)).stat / static_cast<double>(J);
  }
  const double mean_ratio = total / R;
  CHECK(std::fabs(mean_ratio - 1.0) < 3.0 * std::sqrt(2.0 / (J * R)));
}

TEST_CASE("rescaling sham standard errors") {
  const Dataset d = table1();
  CHECK(rescale_sham_ses(d, 1.0) == d);
  // The flag value as typed on the command line; sqrt(21.3 / 38) itself is 0.748683.
  CHECK(std::sqrt(21.3 / 38.0) == doctest::Approx(0.748683).epsilon(1e-6));
  CHECK(rescale_sham_ses(d, 0.74874).summaries()[0].s0 == doctest::Approx(0.030698).epsilon(1e-5));
  CHECK_THROWS_AS(rescale_sham_ses(d, 0.0), ValidationError);
  const auto ab = rescale_sham_ses(rescale_sham_ses(d, 0.7), 1.3);
  const auto direct = rescale_sham_ses(d, 0.7 * 1.3);
  for (std::size_t j = 0; j < d.size(); ++j) {
    const double u = direct.summaries()[j].s0;
    CHECK(std::fabs(ab.summaries()[j].s0 - u) <= std::nextafter(u, kInf) - u);
  }
}

TEST_CASE("classical estimates on the published rows") {
  const Dataset d = table1();
  const auto e = exposed_only(d);
  REQUIRE(e.entries.size() == 4);
  CHECK(e.entries[1].estimate == 0.173);
  CHECK(e.entries[1].se == 0.034);
  const auto f = difference(d);
  CHECK(f.entries[0].estimate == doctest::Approx(0.041));
  CHECK(f.entries[0].se == doctest::Approx(0.05798).epsilon(1e-4));
  for (std::size_t j = 0; j < d.size(); ++j) {
    CHECK(f.entries[j].estimate - e.entries[j].estimate == doctest::Approx(-d.summaries()[j].y0));
    CHECK(e.entries[j].id == d.id(j));
  }

  const Dataset eq(std::vector<StudyRecord>{summary(0.2, 0.1, 0.2, 1e-12)});
  CHECK(difference(eq).entries[0].estimate == 0.0);
  CHECK(difference(eq).entries[0].se == doctest::Approx(0.1));
}

TEST_CASE("significance bands") {
  EstimateSet e{Method::exposed_only, {{"a", 0.173, 0.034}, {"b", 0.0, 1.0}, {"c", 2.5, 1.0}}};
  const auto t = classify_significance(e);
  CHECK(t.entries[0].statistic == doctest::Approx(5.088).epsilon(1e-3));
  CHECK(t.entries[0].p == doctest::Approx(3.6e-7).epsilon(0.05));
  CHECK(t.entries[0].band == Band::below_001);
  CHECK(t.entries[1].p == 1.0);
  CHECK(t.entries[1].band == Band::not_significant);
  CHECK(t.entries[2].p == doctest::Approx(0.01242).epsilon(1e-3));
  CHECK(t.entries[2].band == Band::below_005);

  CHECK(band_for(0.05) == Band::not_significant);
  CHECK(band_for(0.01) == Band::below_005);
  CHECK(band_for(0.0099) == Band::below_001);

  // z-score invariance
  EstimateSet scaled = e;
  for (auto& x : scaled.entries) {
    x.estimate *= 3.7;
    x.se *= 3.7;
  }
  const auto t2 = classify_significance(scaled);
  for (std::size_t j = 0; j < 3; ++j) CHECK(t2.entries[j].p == doctest::Approx(t.entries[j].p).epsilon(1e-12));
}

TEST_CASE("t reference uses the two-sample degrees of freedom") {
  const Dataset d = table1();
  const auto df = t_degrees_of_freedom(d, Method::difference);
  CHECK(df[1] == 66.0);
  CHECK(t_degrees_of_freedom(d, Method::exposed_only)[1] == 35.0);
  const auto t = classify_significance(difference(d), Reference::t, d);
  CHECK(t.reference == Reference::t);
  CHECK(t.entries[1].p == doctest::Approx(stats::two_sided_p_t(t.entries[1].statistic, 66.0)));
}

TEST_CASE("posterior bias and adjustment examples") {
  const auto pb = posterior_bias(0.04, 0.04, 0.0, 0.04);
  CHECK(pb.b_hat == doctest::Approx(0.02));
  CHECK(pb.s_post == doctest::Approx(0.028284).epsilon(1e-5));
  CHECK(posterior_bias(0.3, 0.1, 0.05, 0.0).b_hat == 0.05);
  CHECK(posterior_bias(0.3, 0.1, 0.05, 0.0).s_post == 0.0);
  CHECK(posterior_bias(0.3, 0.1, 0.05, kInf).b_hat == 0.3);
  CHECK(posterior_bias(0.3, 0.1, 0.05, kInf).s_post == 0.1);

  const Dataset d(std::vector<StudyRecord>{summary(0.2, 0.04, 0.1, 0.04)});
  const auto r = linear_adjust(d, 0.0, 0.04);
  const auto& a = r.entries[0];
  CHECK(a.lambda == doctest::Approx(0.5));
  CHECK(a.b_hat == doctest::Approx(0.05));
  CHECK(a.s_post == doctest::Approx(0.02828).epsilon(1e-4));
  CHECK(a.theta_hat == doctest::Approx(0.15));
  CHECK(a.se == doctest::Approx(std::sqrt(0.0024)));
}

TEST_CASE("adjustment limits reproduce the classical estimators") {
  Rng rng(77);
  for (int rep = 0; rep < 100; ++rep) {
    const Dataset d = random_summary(1 + rep % 12, rng);
    const auto lo = linear_adjust(d, 0.0, 0.0).as_estimates();
    const auto hi = linear_adjust(d, 0.0, kInf).as_estimates();
    const auto e = exposed_only(d);
    const auto f = difference(d);
    for (std::size_t j = 0; j < d.size(); ++j) {
      CHECK(std::fabs(lo.entries[j].estimate - e.entries[j].estimate) <= 1e-12);
      CHECK(std::fabs(lo.entries[j].se - e.entries[j].se) <= 1e-12);
      CHECK(std::fabs(hi.entries[j].estimate - f.entries[j].estimate) <= 1e-12);
      CHECK(std::fabs(hi.entries[j].se - f.entries[j].se) <= 1e-12);
    }
  }
}

TEST_CASE("adjustment is monotone between its limits") {
  const Dataset d(std::vector<StudyRecord>{summary(0.2, 0.04, 0.1, 0.04)});
  double prev_theta = kInf, prev_se = 0.0;
  for (double sb = 0.0; sb <= 0.5; sb += 0.01) {
    const auto a = linear_adjust(d, 0.0, sb).entries[0];
    CHECK(a.theta_hat <= prev_theta + 1e-15);
    CHECK(a.se >= prev_se - 1e-15);
    CHECK(a.lambda >= 0.0);
    CHECK(a.lambda <= 1.0);
    prev_theta = a.theta_hat;
    prev_se = a.se;
  }
}

TEST_CASE("small sham spread barely adjusts") {
  for (double s0 : {0.03, 0.04, 0.06}) CHECK(adjustment_weight(s0, 0.008) < 0.07);
  for (double s0 : {0.036, 0.04, 0.06}) CHECK(adjustment_weight(s0, 0.008) < 0.05);
  CHECK_THROWS_AS(linear_adjust(table1(), 0.0, -1.0), ValidationError);
}
