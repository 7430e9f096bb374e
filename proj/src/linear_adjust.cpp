#include "shambayes/linear_adjust.hpp"

#include <cmath>

namespace shambayes {

namespace {

void check_inputs(double mu_b, double sigma_b) {
  if (!std::isfinite(mu_b)) throw ValidationError("mu_b must be finite");
  if (std::isnan(sigma_b) || sigma_b < 0.0)
    throw ValidationError("sigma_b must be non-negative (inf allowed)");
}

}  // namespace

double adjustment_weight(double s0, double sigma_b) {
  if (sigma_b == 0.0) return 0.0;
  if (std::isinf(sigma_b)) return 1.0;
  const double r = s0 / sigma_b;
  return 1.0 / (1.0 + r * r);
}

PosteriorBias posterior_bias(double y0, double s0, double mu_b, double sigma_b) {
  check_inputs(mu_b, sigma_b);
  if (!(s0 > 0.0) || !std::isfinite(s0)) throw ValidationError("s0 must be positive and finite");
  if (!std::isfinite(y0)) throw ValidationError("y0 must be finite");
  if (sigma_b == 0.0) return {mu_b, 0.0};
  if (std::isinf(sigma_b)) return {y0, s0};
  const double lambda = adjustment_weight(s0, sigma_b);
  // Precision-weighted mean mu_b + lambda (y0 - mu_b); variance lambda s0^2.
  return {mu_b + lambda * (y0 - mu_b), s0 * std::sqrt(lambda)};
}

EstimateSet AdjustmentResult::as_estimates() const {
  EstimateSet out{Method::linear_adjust, {}};
  for (const auto& e : entries) out.entries.push_back({e.id, e.theta_hat, e.se});
  return out;
}

AdjustmentResult linear_adjust(const Dataset& d, double mu_b, double sigma_b) {
  check_inputs(mu_b, sigma_b);
  AdjustmentResult out{mu_b, sigma_b, {}};
  for (const auto& r : d.summaries()) {
    const auto post = posterior_bias(r.y0, r.s0, mu_b, sigma_b);
    AdjustmentEntry e;
    e.id = r.id;
    e.lambda = adjustment_weight(r.s0, sigma_b);
    e.b_hat = post.b_hat;
    e.s_post = post.s_post;
    e.theta_hat = r.y1 - post.b_hat;
    e.se = std::sqrt(post.s_post * post.s_post + r.s1 * r.s1);
    out.entries.push_back(std::move(e));
  }
  return out;
}

}  // namespace shambayes
