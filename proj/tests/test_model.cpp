#include <doctest.h>

#include <cmath>
#include <numbers>

#include "shambayes/model.hpp"
#include "shambayes/stats.hpp"
#include "support.hpp"

using namespace shambayes;
using namespace testsupport;

namespace {

Dataset one_study() {
  StudyRecord r;
  r.id = "a";
  r.y1 = 1.0;
  r.s1 = 1.0;
  r.y0 = 0.0;
  r.s0 = 1.0;
  return Dataset(std::vector<StudyRecord>{r});
}

}  // namespace

TEST_CASE("centred density at the zero-residual point") {
  ModelSpec spec;
  spec.prior = PriorKind::uniform;
  Model m(spec, one_study());
  HyperParams h;
  h.mu_theta = 1.0;
  h.sigma_theta = 1.0;
  h.mu_b = 0.0;
  h.sigma_b = 1.0;
  const double theta[] = {1.0};
  const double b[] = {0.0};
  CHECK(m.log_density_constrained(h, theta, b) == doctest::Approx(-3.67575).epsilon(1e-5));
  CHECK(m.log_density_constrained(h, theta, b) == doctest::Approx(-4.0 * stats::kLogSqrt2Pi));

  // d/dtheta of likelihood + population terms vanishes there; in raw
  // coordinates this is the likelihood part of the raw_theta gradient.
  const auto p = m.pack(h, theta, b);
  const auto g = m.gradient(p);
  CHECK(g[0] == doctest::Approx(0.0));
}

TEST_CASE("weak prior adds normal and half-normal terms") {
  ModelSpec u;
  u.prior = PriorKind::uniform;
  ModelSpec w = u;
  w.prior = PriorKind::weak;
  const auto d = one_study();
  Model mu(u, d), mw(w, d);
  HyperParams h;
  h.mu_theta = 0.3;
  h.sigma_theta = 0.7;
  h.mu_b = -0.2;
  h.sigma_b = 1.4;
  const double theta[] = {0.5};
  const double b[] = {0.1};
  const double expected = stats::normal_log_density(0.3, 0, 1) + stats::normal_log_density(-0.2, 0, 1) +
                          std::log(2.0) + stats::normal_log_density(0.7, 0, 1) + std::log(2.0) +
                          stats::normal_log_density(1.4, 0, 1);
  CHECK(mw.log_density_constrained(h, theta, b) - mu.log_density_constrained(h, theta, b) ==
        doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("automatic prior resolves by study count") {
  CHECK(resolve_prior(PriorKind::automatic, 14) == PriorKind::weak);
  CHECK(resolve_prior(PriorKind::automatic, 15) == PriorKind::uniform);
  CHECK(resolve_prior(PriorKind::uniform, 3) == PriorKind::uniform);
}

TEST_CASE("analytic gradients match central differences for every variant") {
  Rng rng(7);
  for (Variant v : all_variants()) {
    CAPTURE(to_string(v));
    for (PriorKind prior : {PriorKind::uniform, PriorKind::weak}) {
      ModelSpec spec;
      spec.variant = v;
      spec.prior = prior;
      const auto d = dataset_for(v, 6, rng);
      Model m(spec, d);
      for (int k = 0; k < 5; ++k) {
        const auto p = random_point(m, rng);
        CHECK(max_fd_error(m, p) <= 1e-5);
      }
    }
  }
}

TEST_CASE("gradients with fixed hyperparameters") {
  Rng rng(11);
  for (Variant v : all_variants()) {
    CAPTURE(to_string(v));
    ModelSpec spec;
    spec.variant = v;
    HyperParams h;
    h.sigma_theta = 0.1;
    h.sigma_b = 0.05;
    h.rho = 0.3;
    h.alpha = 0.1;
    h.ell = 30;
    spec.fixed_hyper = h;
    Model m(spec, dataset_for(v, 6, rng));
    CHECK(m.dimension() == (m.layout().has_b() ? 12u : 6u));
    const auto p = random_point(m, rng);
    CHECK(max_fd_error(m, p) <= 1e-5);
  }
}

TEST_CASE("non-centred density equals centred density plus Jacobian") {
  Rng rng(3);
  for (Variant v : all_variants()) {
    CAPTURE(to_string(v));
    ModelSpec spec;
    spec.variant = v;
    spec.prior = PriorKind::weak;
    Model m(spec, dataset_for(v, 6, rng));
    for (int k = 0; k < 5; ++k) {
      const auto p = random_point(m, rng);
      const auto st = m.latent(p);
      const double lhs = m.log_posterior(p);
      const double rhs = m.log_density_constrained(m.hyper(p), st.theta, st.b) + m.log_abs_det_jacobian(p);
      CHECK(lhs == doctest::Approx(rhs).epsilon(1e-10));
    }
  }
}

TEST_CASE("pack inverts hyper and latent") {
  Rng rng(5);
  for (Variant v : all_variants()) {
    CAPTURE(to_string(v));
    ModelSpec spec;
    spec.variant = v;
    Model m(spec, dataset_for(v, 6, rng));
    const auto p = random_point(m, rng);
    const auto st = m.latent(p);
    const auto q = m.pack(m.hyper(p), st.theta, st.b);
    REQUIRE(q.size() == p.size());
    for (std::size_t i = 0; i < p.size(); ++i) CHECK(q[i] == doctest::Approx(p[i]).epsilon(1e-9));
  }
}

TEST_CASE("correlated with rho = 0 equals normal-default") {
  Rng rng(13);
  const auto d = random_summary(6, rng);
  ModelSpec n, c;
  n.variant = Variant::normal_default;
  c.variant = Variant::correlated;
  Model mn(n, d), mc(c, d);
  for (int k = 0; k < 10; ++k) {
    auto p = random_point(mn, rng);
    auto q = p;
    q.push_back(0.0);  // atanh(rho) after the other hyperparameters
    CHECK(mc.log_posterior(q) - std::log(0.5) == doctest::Approx(mn.log_posterior(p)).epsilon(1e-12));
    const auto gn = mn.gradient(p);
    const auto gc = mc.gradient(q);
    for (std::size_t i = 0; i < p.size(); ++i) CHECK(gc[i] == doctest::Approx(gn[i]).epsilon(1e-12));
  }
}

TEST_CASE("exchangeability for non-structured variants") {
  Rng rng(17);
  for (Variant v : {Variant::normal_default, Variant::correlated, Variant::binomial, Variant::diff_meta,
                    Variant::no_pool_theta, Variant::no_pool_both}) {
    CAPTURE(to_string(v));
    ModelSpec spec;
    spec.variant = v;
    const auto d = dataset_for(v, 6, rng);
    Model m(spec, d);
    const auto p = random_point(m, rng);
    // Reverse studies in the data and in each latent block.
    Dataset rev = d.kind() == DataKind::summary
                      ? Dataset(std::vector<StudyRecord>(d.summaries().rbegin(), d.summaries().rend()))
                      : Dataset(std::vector<CountRecord>(d.counts().rbegin(), d.counts().rend()));
    Model mr(spec, rev);
    auto q = p;
    std::reverse(q.begin(), q.begin() + 6);
    if (m.layout().has_b()) std::reverse(q.begin() + 6, q.begin() + 12);
    CHECK(mr.log_posterior(q) == doctest::Approx(m.log_posterior(p)).epsilon(1e-12));
  }
}

TEST_CASE("diff-meta depends on differences only") {
  Rng rng(19);
  const auto d = random_summary(6, rng);
  auto rs = d.summaries();
  for (auto& r : rs) {
    r.y1 += 0.37;
    r.y0 += 0.37;
  }
  ModelSpec spec;
  spec.variant = Variant::diff_meta;
  Model a(spec, d), b(spec, Dataset(rs));
  const auto p = random_point(a, rng);
  CHECK(a.log_posterior(p) == doctest::Approx(b.log_posterior(p)).epsilon(1e-9));
  CHECK_FALSE(a.layout().has_b());
}

TEST_CASE("binomial locality: one more remission in both arms of one study") {
  Rng rng(23);
  std::vector<CountRecord> cs = {{"a", 3, 10, 2, 12}, {"b", 4, 9, 1, 8}};
  auto cs2 = cs;
  cs2[1].n1 += 1;
  cs2[1].n0 += 1;
  ModelSpec spec;
  spec.variant = Variant::binomial;
  Model m1(spec, Dataset(cs)), m2(spec, Dataset(cs2));
  const auto p = random_point(m1, rng);
  const auto st = m1.latent(p);
  auto term = [](const CountRecord& c, double theta, double b) {
    const double e1 = theta + b, e0 = b;
    auto lc = [](double N, double n) { return std::lgamma(N + 1) - std::lgamma(n + 1) - std::lgamma(N - n + 1); };
    return lc(c.N1, c.n1) + c.n1 * e1 - c.N1 * stats::log1p_exp(e1) + lc(c.N0, c.n0) + c.n0 * e0 -
           c.N0 * stats::log1p_exp(e0);
  };
  const double delta = term(cs2[1], st.theta[1], st.b[1]) - term(cs[1], st.theta[1], st.b[1]);
  CHECK(m2.log_posterior(p) - m1.log_posterior(p) == doctest::Approx(delta).epsilon(1e-10));
}

TEST_CASE("kernel matrix entries") {
  const std::vector<double> x = {0.0, 30.0, 60.0};
  const auto K = kernel_matrix(KernelKind::se, x, 1.0, 30.0, 1.0);
  CHECK(K(0, 0) == doctest::Approx(1.0 + 1e-8).epsilon(1e-15));
  CHECK(K(0, 1) == doctest::Approx(0.60653).epsilon(1e-5));
  CHECK(K(0, 1) == doctest::Approx(std::exp(-0.5)).epsilon(1e-14));
  const auto P = kernel_matrix(KernelKind::periodic, x, 2.0, 1.0, 30.0);
  CHECK(P(0, 1) == doctest::Approx(4.0).epsilon(1e-12));
  CHECK(P(0, 0) == doctest::Approx(4.0 * (1.0 + 1e-8)).epsilon(1e-15));
  CHECK_THROWS_AS(kernel_matrix(KernelKind::se, x, 0.0, 1.0, 1.0), ModelError);
  CHECK_THROWS_AS(kernel_matrix(KernelKind::se, x, 1.0, -1.0, 1.0), ModelError);
}

TEST_CASE("gp-se with tiny length-scale approaches normal-default with sigma_theta = alpha") {
  Rng rng(29);
  const auto d = random_summary(6, rng);
  const auto xs = d.covariates();
  double min_gap = 1e300;
  for (std::size_t i = 0; i < xs.size(); ++i)
    for (std::size_t j = 0; j < i; ++j) min_gap = std::min(min_gap, std::fabs(xs[i] - xs[j]));
  ModelSpec g, n;
  g.variant = Variant::gp_se;
  g.prior = n.prior = PriorKind::uniform;
  n.variant = Variant::normal_default;
  Model mg(g, d), mn(n, d);
  HyperParams h;
  h.mu_theta = 0.1;
  h.alpha = 0.07;
  h.ell = 1e-6 * min_gap;
  h.mu_b = 0.01;
  h.sigma_b = 0.02;
  HyperParams hn = h;
  hn.sigma_theta = h.alpha;
  std::vector<double> theta(6), b(6);
  for (int j = 0; j < 6; ++j) {
    theta[j] = 0.1 + 0.05 * std_normal(rng);
    b[j] = 0.02 * std_normal(rng);
  }
  // The GP density also carries the alpha and ell hyperpriors.
  const double hp = std::log(2.0) - stats::kLogSqrt2Pi - std::log(0.2) - 0.5 * std::pow(h.alpha / 0.2, 2) +
                    (-stats::kLogSqrt2Pi - std::log(h.ell) - 0.5 * std::pow(std::log(h.ell / 50.0), 2));
  CHECK(mg.log_density_constrained(h, theta, b) - hp ==
        doctest::Approx(mn.log_density_constrained(hn, theta, b)).epsilon(1e-6));
}

TEST_CASE("layout and names") {
  Rng rng(31);
  ModelSpec spec;
  spec.variant = Variant::no_pool_theta;
  Model m(spec, random_summary(3, rng));
  CHECK(m.dimension() == 8);
  CHECK(m.layout().slot(Hyper::mu_theta) == -1);
  const auto names = m.layout().unconstrained_names();
  CHECK(names[0] == "theta[1]");
  CHECK(names[3] == "raw_b[1]");
  CHECK(names[6] == "mu_b");
  CHECK(names[7] == "log_sigma_b");
  const auto cn = m.layout().constrained_names();
  CHECK(cn.front() == "mu_b");
  CHECK(cn.size() == 8);
}

TEST_CASE("variant and dataset compatibility") {
  Rng rng(37);
  ModelSpec spec;
  spec.variant = Variant::binomial;
  CHECK_THROWS_AS(Model(spec, random_summary(3, rng)), ValidationError);
  spec.variant = Variant::gp_se;
  CHECK_THROWS_AS(Model(spec, random_summary(3, rng, 0.04, false)), ValidationError);
  spec.variant = Variant::normal_default;
  CHECK_THROWS_AS(Model(spec, random_counts(3, rng)), ValidationError);
}

TEST_CASE("non-finite parameters are rejected") {
  Rng rng(41);
  ModelSpec spec;
  Model m(spec, random_summary(3, rng));
  std::vector<double> p(m.dimension(), 0.0);
  p[2] = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(m.log_posterior(p), ModelError);
  std::vector<double> g(m.dimension());
  CHECK(m.log_posterior_gradient(p, g) == -std::numeric_limits<double>::infinity());
  CHECK_THROWS_AS(m.log_posterior(std::vector<double>(3, 0.0)), ModelError);
}

TEST_CASE("model spec JSON round trip") {
  ModelSpec s;
  s.variant = Variant::gp_periodic;
  s.prior = PriorKind::weak;
  s.gp.period_median = 25.0;
  HyperParams h;
  h.alpha = 0.3;
  s.fixed_hyper = h;
  CHECK(model_spec_from_json(model_spec_to_json(s)) == s);
  CHECK_THROWS_AS(model_spec_from_json(R"({"variant":"bogus"})"), ValidationError);
}
