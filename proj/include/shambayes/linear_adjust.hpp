#pragma once

#include <string>
#include <vector>

#include "shambayes/classical.hpp"
#include "shambayes/study_data.hpp"

namespace shambayes {

/// Normal posterior for one study's bias given its sham measurement and a
/// normal(mu_b, sigma_b) population. sigma_b may be +infinity.
struct PosteriorBias {
  double b_hat = 0.0;
  double s_post = 0.0;
};

PosteriorBias posterior_bias(double y0, double s0, double mu_b, double sigma_b);

/// Share of the centred sham measurement that is subtracted:
/// sigma_b^2 / (sigma_b^2 + s0^2), with exact limits 0 and 1.
double adjustment_weight(double s0, double sigma_b);

struct AdjustmentEntry {
  std::string id;
  double lambda = 0.0;
  double b_hat = 0.0;
  double s_post = 0.0;
  double theta_hat = 0.0;
  double se = 0.0;
};

struct AdjustmentResult {
  double mu_b = 0.0;
  double sigma_b = 0.0;
  std::vector<AdjustmentEntry> entries;

  EstimateSet as_estimates() const;
};

/// theta_hat_j = y1_j - b_hat_j with se_j = sqrt(s_post_j^2 + s1_j^2).
/// sigma_b = 0 reproduces the exposed-only estimate when mu_b = 0, and
/// sigma_b = inf reproduces the difference estimate, both bit for bit.
AdjustmentResult linear_adjust(const Dataset& d, double mu_b, double sigma_b);

}  // namespace shambayes
