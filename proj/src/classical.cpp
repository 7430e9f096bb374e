#include "shambayes/classical.hpp"

#include <cmath>

#include "shambayes/stats.hpp"

namespace shambayes {

std::string_view to_string(Method m) {
  switch (m) {
    case Method::exposed_only: return "exposed-only";
    case Method::difference: return "difference";
    case Method::linear_adjust: return "linear-adjust";
    case Method::bayes: return "bayes";
  }
  return "unknown";
}

std::optional<Method> parse_method(std::string_view s) {
  for (auto m : {Method::exposed_only, Method::difference, Method::linear_adjust, Method::bayes}) {
    if (to_string(m) == s) return m;
  }
  return std::nullopt;
}

EstimateSet exposed_only(const Dataset& d) {
  EstimateSet out{Method::exposed_only, {}};
  for (const auto& r : d.summaries()) out.entries.push_back({r.id, r.y1, r.s1});
  return out;
}

EstimateSet difference(const Dataset& d) {
  EstimateSet out{Method::difference, {}};
  for (const auto& r : d.summaries())
    out.entries.push_back({r.id, r.y1 - r.y0, std::sqrt(r.s1 * r.s1 + r.s0 * r.s0)});
  return out;
}

std::string_view to_string(Band b) {
  switch (b) {
    case Band::below_001: return "p<0.01";
    case Band::below_005: return "0.01<=p<0.05";
    case Band::not_significant: return "p>=0.05";
  }
  return "unknown";
}

Band band_for(double p) {
  if (p < 0.01) return Band::below_001;
  if (p < 0.05) return Band::below_005;
  return Band::not_significant;
}

std::vector<double> t_degrees_of_freedom(const Dataset& d, Method m) {
  const auto& rs = d.summaries();
  std::vector<double> df;
  df.reserve(rs.size());
  for (const auto& r : rs) {
    switch (m) {
      case Method::exposed_only:
        if (!r.n1) throw ValidationError("t reference requires sample size n1 for study '" + r.id + "'");
        df.push_back(*r.n1 - 1.0);
        break;
      case Method::difference:
        if (!r.n1 || !r.n0)
          throw ValidationError("t reference requires sample sizes n1 and n0 for study '" + r.id + "'");
        df.push_back(*r.n1 + *r.n0 - 2.0);
        break;
      default:
        throw ValidationError("no default t degrees of freedom for method " +
                              std::string(to_string(m)));
    }
  }
  return df;
}

SignificanceTable classify_significance(const EstimateSet& e) {
  SignificanceTable t{e.method, Reference::normal, {}};
  for (const auto& x : e.entries) {
    const double z = x.estimate / x.se;
    const double p = stats::two_sided_p_normal(z);
    t.entries.push_back({x.id, z, p, band_for(p)});
  }
  return t;
}

SignificanceTable classify_significance(const EstimateSet& e, const std::vector<double>& df) {
  if (df.size() != e.entries.size())
    throw ValidationError("degrees of freedom must be given for every study");
  SignificanceTable t{e.method, Reference::t, {}};
  for (std::size_t j = 0; j < df.size(); ++j) {
    if (!(df[j] > 0.0)) throw ValidationError("t degrees of freedom must be positive");
    const auto& x = e.entries[j];
    const double stat = x.estimate / x.se;
    const double p = stats::two_sided_p_t(stat, df[j]);
    t.entries.push_back({x.id, stat, p, band_for(p)});
  }
  return t;
}

SignificanceTable classify_significance(const EstimateSet& e, Reference ref, const Dataset& d) {
  if (ref == Reference::normal) return classify_significance(e);
  return classify_significance(e, t_degrees_of_freedom(d, e.method));
}

}  // namespace shambayes
