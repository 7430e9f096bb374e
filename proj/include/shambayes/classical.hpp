#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "shambayes/study_data.hpp"

namespace shambayes {

enum class Method { exposed_only, difference, linear_adjust, bayes };

std::string_view to_string(Method m);
std::optional<Method> parse_method(std::string_view s);

struct Estimate {
  std::string id;
  double estimate = 0.0;
  double se = 1.0;
};

/// Per-study point estimates and standard errors, in dataset order.
struct EstimateSet {
  Method method = Method::exposed_only;
  std::vector<Estimate> entries;
};

/// y1 with standard error s1.
EstimateSet exposed_only(const Dataset& d);
/// y1 - y0 with standard error sqrt(s1^2 + s0^2).
EstimateSet difference(const Dataset& d);

/// Significance bands are half-open: [0, 0.01), [0.01, 0.05), [0.05, 1].
enum class Band { below_001, below_005, not_significant };

std::string_view to_string(Band b);
Band band_for(double p);

enum class Reference { normal, t };

struct SignificanceEntry {
  std::string id;
  double statistic = 0.0;  // z or t
  double p = 1.0;          // two-sided
  Band band = Band::not_significant;
};

struct SignificanceTable {
  Method method = Method::exposed_only;
  Reference reference = Reference::normal;
  std::vector<SignificanceEntry> entries;
};

/// Default t degrees of freedom per study: n1 - 1 for exposed-only and
/// n1 + n0 - 2 for the difference. Throws ValidationError when sample sizes
/// are missing or the method has no default.
std::vector<double> t_degrees_of_freedom(const Dataset& d, Method m);

SignificanceTable classify_significance(const EstimateSet& e);
SignificanceTable classify_significance(const EstimateSet& e, const std::vector<double>& df);
/// Dispatches on `ref`, deriving t degrees of freedom from `d` when needed.
SignificanceTable classify_significance(const EstimateSet& e, Reference ref, const Dataset& d);

}  // namespace shambayes
