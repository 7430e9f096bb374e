#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "shambayes/model.hpp"
#include "shambayes/rng.hpp"
#include "shambayes/study_data.hpp"

namespace testsupport {

using namespace shambayes;

inline Dataset random_summary(std::size_t J, Rng& rng, double s = 0.04, bool with_x = true) {
  std::vector<StudyRecord> rs;
  const double freqs[] = {1, 15, 30, 45, 60, 75, 90, 105, 120, 135, 150, 165};
  for (std::size_t j = 0; j < J; ++j) {
    StudyRecord r;
    r.id = "s" + std::to_string(j + 1);
    if (with_x) r.x = freqs[j % 12] + 180.0 * static_cast<double>(j / 12);
    r.y1 = 0.1 + s * std_normal(rng);
    r.s1 = s * (0.5 + uniform01(rng));
    r.y0 = s * std_normal(rng);
    r.s0 = s * (0.5 + uniform01(rng));
    r.n1 = 32;
    r.n0 = 32;
    rs.push_back(r);
  }
  return Dataset(rs);
}

inline Dataset random_counts(std::size_t J, Rng& rng) {
  std::vector<CountRecord> rs;
  for (std::size_t j = 0; j < J; ++j) {
    CountRecord c;
    c.id = "c" + std::to_string(j + 1);
    c.N1 = 5 + static_cast<int>(uniform01(rng) * 30);
    c.N0 = 5 + static_cast<int>(uniform01(rng) * 30);
    c.n1 = static_cast<int>(uniform01(rng) * (c.N1 + 1)) % (c.N1 + 1);
    c.n0 = static_cast<int>(uniform01(rng) * (c.N0 + 1)) % (c.N0 + 1);
    rs.push_back(c);
  }
  return Dataset(rs);
}

inline const std::vector<Variant>& all_variants() {
  static const std::vector<Variant> v = {
      Variant::normal_default, Variant::correlated,    Variant::binomial,
      Variant::diff_meta,      Variant::no_pool_theta, Variant::no_pool_both,
      Variant::gp_se,          Variant::gp_periodic,   Variant::linear_trend};
  return v;
}

inline Dataset dataset_for(Variant v, std::size_t J, Rng& rng) {
  return v == Variant::binomial ? random_counts(J, rng) : random_summary(J, rng);
}

/// Random unconstrained point with hyperparameters near plausible values.
inline std::vector<double> random_point(const Model& m, Rng& rng) {
  std::vector<double> p(m.dimension());
  for (auto& v : p) v = std_normal(rng);
  const auto& L = m.layout();
  auto set = [&](Hyper h, double centre, double spread) {
    const int s = L.slot(h);
    if (s >= 0) p[s] = centre + spread * std_normal(rng);
  };
  set(Hyper::sigma_theta, std::log(0.1), 0.5);
  set(Hyper::sigma_b, std::log(0.05), 0.5);
  set(Hyper::alpha, std::log(0.1), 0.3);
  set(Hyper::ell, std::log(40.0), 0.3);
  set(Hyper::period, std::log(30.0), 0.2);
  set(Hyper::rho, 0.0, 0.5);
  return p;
}

/// Central difference of f at 0, refined by Richardson extrapolation over
/// shrinking steps (Ridders). Plain central differences lose about five
/// digits to cancellation when the log density is large, as it is for the
/// trend model with x in the hundreds.
/// Returns the estimate and Ridders' own error estimate.
template <class F>
std::pair<double, double> ridders_derivative(F f, double h) {
  constexpr int kN = 10;
  constexpr double kShrink = 1.4, kShrink2 = kShrink * kShrink;
  double a[kN][kN];
  double err = std::numeric_limits<double>::max(), ans = 0.0;
  a[0][0] = (f(h) - f(-h)) / (2.0 * h);
  for (int i = 1; i < kN; ++i) {
    h /= kShrink;
    a[0][i] = (f(h) - f(-h)) / (2.0 * h);
    double fac = kShrink2;
    for (int j = 1; j <= i; ++j) {
      a[j][i] = (a[j - 1][i] * fac - a[j - 1][i - 1]) / (fac - 1.0);
      fac *= kShrink2;
      const double e = std::max(std::fabs(a[j][i] - a[j - 1][i]), std::fabs(a[j][i] - a[j - 1][i - 1]));
      if (e <= err) {
        err = e;
        ans = a[j][i];
      }
    }
    if (std::fabs(a[i][i] - a[i - 1][i - 1]) >= 2.0 * err) break;
  }
  return {ans, err};
}

/// Largest relative discrepancy between analytic and finite-difference
/// gradients, with relative error measured against max(1, |g|).
inline double max_fd_error(const Model& m, const std::vector<double>& p) {
  const auto g = m.gradient(p);
  double worst = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    auto f = [&](double d) {
      auto q = p;
      q[i] += d;
      return m.log_posterior(q);
    };
    // Oscillating directions (the periodic kernel's period) need small first
    // steps, large-magnitude ones large steps; keep the best self-estimate.
    std::pair<double, double> best{0.0, std::numeric_limits<double>::infinity()};
    for (double h0 : {1e-2, 1e-3, 1e-4}) {
      const auto r = ridders_derivative(f, h0 * (1.0 + std::fabs(p[i])));
      if (r.second < best.second) best = r;
    }
    const double fd = best.first;
    const double err = std::fabs(fd - g[i]) / std::max(1.0, std::fabs(g[i]));
    worst = std::max(worst, err);
  }
  return worst;
}

}  // namespace testsupport

namespace testsupport {

/// Closed-form posterior of (theta_j, b_j) for one study under fixed
/// normal population parameters: a 2x2 linear-Gaussian update.
struct Gauss2 {
  double mean_theta, mean_b, sd_theta, sd_b;
};

inline Gauss2 conjugate_posterior(const StudyRecord& r, const HyperParams& h) {
  // Prior precision diag(1/st^2, 1/sb^2); observations y1 = theta + b, y0 = b.
  const double a11 = 1.0 / (h.sigma_theta * h.sigma_theta) + 1.0 / (r.s1 * r.s1);
  const double a12 = 1.0 / (r.s1 * r.s1);
  const double a22 = 1.0 / (h.sigma_b * h.sigma_b) + 1.0 / (r.s1 * r.s1) + 1.0 / (r.s0 * r.s0);
  const double r1 = h.mu_theta / (h.sigma_theta * h.sigma_theta) + r.y1 / (r.s1 * r.s1);
  const double r2 = h.mu_b / (h.sigma_b * h.sigma_b) + r.y1 / (r.s1 * r.s1) + r.y0 / (r.s0 * r.s0);
  const double det = a11 * a22 - a12 * a12;
  const double c11 = a22 / det, c22 = a11 / det, c12 = -a12 / det;
  return {c11 * r1 + c12 * r2, c12 * r1 + c22 * r2, std::sqrt(c11), std::sqrt(c22)};
}

}  // namespace testsupport
