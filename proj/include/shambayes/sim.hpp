#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "shambayes/classical.hpp"
#include "shambayes/model.hpp"
#include "shambayes/rng.hpp"
#include "shambayes/sampler.hpp"
#include "shambayes/study_data.hpp"

namespace shambayes {

enum class ThetaSource {
  posterior_draws,  // one joint draw of theta per replicate from stored draws
  fixed_vector,     // the same theta every replicate
  raw_observed,     // observed active-arm estimates used as theta
};
std::string_view to_string(ThetaSource s);
std::optional<ThetaSource> parse_theta_source(std::string_view s);

enum class Noise {
  normal,  // y ~ normal(mean, sigma_y)
  t,       // y = mean + sigma_y * t_{n-1}, n the arm's sample size
};
std::string_view to_string(Noise n);
std::optional<Noise> parse_noise(std::string_view s);

struct SimConfig {
  std::vector<double> sigma_b_grid = {0.0, 0.02, 0.04, 0.06, 0.08, 0.10};
  int replicates = 200;
  double sigma_y = 0.04;
  double mu_b = 0.0;
  /// Studies per replicate; unset means all available studies.
  std::optional<std::size_t> size;

  ThetaSource theta_source = ThetaSource::fixed_vector;
  std::vector<std::vector<double>> theta_draws;  // posterior_draws: one row per joint draw
  std::vector<double> theta_fixed;               // fixed_vector
  std::vector<double> observed_y1;               // raw_observed
  /// Per-study arm sizes, required for t noise.
  std::vector<int> n1;
  std::vector<int> n0;
  /// Optional covariate copied into simulated records.
  std::vector<double> x;

  Noise noise = Noise::normal;
  std::vector<Method> estimators = {Method::exposed_only, Method::difference, Method::bayes};
  ModelSpec bayes_model;
  SamplerConfig bayes_sampler = {2, 500, 500, 0.8, 1024, kDefaultSeed, 1};
  std::uint64_t seed = kDefaultSeed;
  std::size_t threads = 0;
};

/// Number of studies the theta source provides.
std::size_t available_studies(const SimConfig& cfg);
/// Throws ValidationError on inconsistent settings.
void validate(const SimConfig& cfg);

/// Rows theta[1..J] of every draw, in draw order.
std::vector<std::vector<double>> theta_rows(const Draws& d);

struct Replicate {
  std::vector<std::size_t> indices;  // selected study positions, increasing
  std::vector<double> theta;
  std::vector<double> b;
  Dataset data;
};

Replicate simulate_replicate(const SimConfig& cfg, double sigma_b, Rng& rng);

struct Metrics {
  double prop_significant = 0.0;
  double type_s_rate = 0.0;  // NaN when nothing was significant
  double rmse = 0.0;
  double rank_corr = 0.0;  // NaN when either vector is constant
};

/// Significance: estimate +- 1.96 se excludes zero.
Metrics evaluate_metrics(const EstimateSet& e, const std::vector<double>& truths);

struct Interval {
  double estimate;  // posterior mean
  double lower;     // 2.5% quantile
  double upper;     // 97.5% quantile
};

/// Significance: the interval excludes zero.
Metrics evaluate_metrics(const std::vector<Interval>& e, const std::vector<double>& truths);

enum class MetricKind { prop_significant, type_s_rate, rmse, rank_corr };
inline constexpr int kNumMetrics = 4;
std::string_view to_string(MetricKind k);
double get(const Metrics& m, MetricKind k);

struct MetricStat {
  double value = 0.0;  // mean over contributing replicates
  double mc_se = 0.0;  // sd / sqrt(n_used)
  std::size_t n_used = 0;
};

struct ReplicateOutcome {
  bool failed = false;
  bool converged = true;
  Metrics metrics;
};

struct GridCell {
  double sigma_b = 0.0;
  Method estimator = Method::exposed_only;
  std::size_t n_replicates = 0;
  std::size_t n_failed = 0;
  std::size_t n_nonconverged = 0;
  std::array<MetricStat, kNumMetrics> stats{};
  std::vector<ReplicateOutcome> replicates;  // in replicate order

  const MetricStat& stat(MetricKind k) const { return stats[static_cast<int>(k)]; }
};

struct MetricsGrid {
  std::vector<GridCell> cells;  // grid-major, then estimator order of the config

  const GridCell* find(double sigma_b, Method m) const;
};

/// Runs every (grid point, replicate) pair, concurrently up to cfg.threads.
/// Results depend only on cfg, not on scheduling.
MetricsGrid run_grid(const SimConfig& cfg);

}  // namespace shambayes
