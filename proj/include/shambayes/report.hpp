#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "shambayes/classical.hpp"
#include "shambayes/linear_adjust.hpp"
#include "shambayes/sampler.hpp"
#include "shambayes/sim.hpp"
#include "shambayes/study_data.hpp"

namespace shambayes {

/// Tabular and JSON emitters. Numbers use the shortest round-trip decimal
/// form, so parsing an emitted file gives back bit-identical doubles.
/// Non-finite numbers appear as inf / -inf / nan in CSV and as the strings
/// "Infinity" / "-Infinity" / "NaN" in JSON.

// Estimates: id,estimate,se
std::string estimates_csv(const EstimateSet& e);
std::string estimates_json(const EstimateSet& e);
EstimateSet parse_estimates_csv(std::string_view text, Method method);

// Significance: id,statistic,p,band
std::string significance_csv(const SignificanceTable& t);
std::string significance_json(const SignificanceTable& t);

// Adjustment: id,estimate,se,lambda,b_hat,s_post (estimate = theta_hat)
std::string adjustment_csv(const AdjustmentResult& a);
std::string adjustment_json(const AdjustmentResult& a);

std::string chi_square_json(const ChiSquareResult& c, std::size_t num_studies);

// Draws: chain,iteration,divergent,<names...>; chain and iteration are 1-based.
std::string draws_csv(const Draws& d);
Draws parse_draws_csv(std::string_view text);

std::string fit_summary_json(const FitSummary& s, const ModelSpec* spec = nullptr,
                             const SamplerConfig* config = nullptr);
FitSummary parse_fit_summary_json(std::string_view text);

// Tidy grid: sigma_b,estimator,metric,value,n_replicates,n_failed,mc_se,n_used
std::string metrics_grid_csv(const MetricsGrid& g);

// SVG figures.

/// Two panels: estimates with +-1.96 se bars shaded by significance band,
/// and per-study p-values on a log axis.
std::string estimates_svg(const EstimateSet& e, const SignificanceTable& t, const std::vector<double>& x);
/// Sham estimate against exposed estimate, one point per study.
std::string sham_scatter_svg(const Dataset& d);
/// Posterior mean +- sd of theta_j next to the raw estimates.
std::string shrinkage_svg(const FitSummary& s, const EstimateSet& raw, const std::vector<double>& x);
/// Four panels (one per metric) with one line per estimator over sigma_b.
std::string metrics_grid_svg(const MetricsGrid& g, std::string_view title);

}  // namespace shambayes
