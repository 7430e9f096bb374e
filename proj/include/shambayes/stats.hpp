#pragma once

#include <span>
#include <vector>

namespace shambayes::stats {

inline constexpr double kLogSqrt2Pi = 0.91893853320467274178;

double normal_cdf(double z);
double normal_quantile(double p);
double normal_log_density(double x, double mean, double sd);

/// Two-sided tail probability P(|Z| >= |z|).
double two_sided_p_normal(double z);
/// Two-sided tail probability under Student t with `df` degrees of freedom.
double two_sided_p_t(double t, double df);

/// Regularized lower incomplete gamma P(df/2, x/2).
double chi_square_cdf(double x, double df);

double inv_logit(double x);
/// log(1 + exp(x)) without overflow.
double log1p_exp(double x);

double mean(std::span<const double> v);
/// Sample standard deviation (divisor n - 1); 0 for n < 2.
double sample_sd(std::span<const double> v);
/// Quantile with linear interpolation between order statistics (R type 7).
double quantile_sorted(std::span<const double> sorted, double p);

/// Average ranks (1-based); ties get the mean of the ranks they span.
std::vector<double> average_ranks(std::span<const double> v);
double pearson(std::span<const double> a, std::span<const double> b);
double spearman(std::span<const double> a, std::span<const double> b);

}  // namespace shambayes::stats
