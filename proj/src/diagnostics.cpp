#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "shambayes/sampler.hpp"
#include "shambayes/stats.hpp"

namespace shambayes {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
constexpr double kInf = std::numeric_limits<double>::infinity();

using Chains = std::vector<std::vector<double>>;

bool is_constant(const Chains& c) {
  const double first = c.front().front();
  for (const auto& ch : c) {
    for (double v : ch) {
      if (v != first) return false;
    }
  }
  return true;
}

/// Each chain cut into two halves; the middle draw of odd-length chains is dropped.
Chains split_chains(const Chains& c) {
  Chains out;
  for (const auto& ch : c) {
    const std::size_t half = ch.size() / 2;
    out.emplace_back(ch.begin(), ch.begin() + half);
    out.emplace_back(ch.end() - half, ch.end());
  }
  return out;
}

Chains z_scale(const Chains& c) {
  std::vector<double> all;
  for (const auto& ch : c) all.insert(all.end(), ch.begin(), ch.end());
  const auto ranks = stats::average_ranks(all);
  const double S = static_cast<double>(all.size());
  Chains out = c;
  std::size_t k = 0;
  for (auto& ch : out) {
    for (double& v : ch) v = stats::normal_quantile((ranks[k++] - 0.375) / (S + 0.25));
  }
  return out;
}

Chains fold(const Chains& c) {
  std::vector<double> all;
  for (const auto& ch : c) all.insert(all.end(), ch.begin(), ch.end());
  std::sort(all.begin(), all.end());
  const double med = stats::quantile_sorted(all, 0.5);
  Chains out = c;
  for (auto& ch : out) {
    for (double& v : ch) v = std::fabs(v - med);
  }
  return out;
}

double rhat_basic(const Chains& c) {
  const double n = static_cast<double>(c.front().size());
  std::vector<double> means, vars;
  for (const auto& ch : c) {
    means.push_back(stats::mean(ch));
    const double sd = stats::sample_sd(ch);
    vars.push_back(sd * sd);
  }
  const double W = stats::mean(vars);
  const double sdm = stats::sample_sd(means);
  const double B = n * sdm * sdm;
  if (!(W > 0.0)) return kInf;
  const double var_est = (n - 1.0) / n * W + B / n;
  return std::sqrt(var_est / W);
}

/// Biased autocovariance of one chain at a lag, computed on demand.
double autocov(const std::vector<double>& x, double m, std::size_t lag) {
  const std::size_t n = x.size();
  double s = 0.0;
  for (std::size_t i = 0; i + lag < n; ++i) s += (x[i] - m) * (x[i + lag] - m);
  return s / static_cast<double>(n);
}

double ess_raw(const Chains& c) {
  const std::size_t m = c.size();
  const std::size_t n = c.front().size();
  if (n < 4) return kNaN;
  std::vector<double> means(m), vars(m);
  for (std::size_t k = 0; k < m; ++k) {
    means[k] = stats::mean(c[k]);
    vars[k] = autocov(c[k], means[k], 0) * static_cast<double>(n) / (n - 1.0);
  }
  const double mean_var = stats::mean(vars);
  double var_plus = mean_var * (n - 1.0) / static_cast<double>(n);
  if (m > 1) {
    const double s = stats::sample_sd(means);
    var_plus += s * s;
  }
  if (!(var_plus > 0.0)) return kNaN;

  auto mean_acov = [&](std::size_t lag) {
    double s = 0.0;
    for (std::size_t k = 0; k < m; ++k) s += autocov(c[k], means[k], lag);
    return s / static_cast<double>(m);
  };

  std::vector<double> rho(n + 3, 0.0);
  double rho_even = 1.0;
  rho[0] = rho_even;
  double rho_odd = 1.0 - (mean_var - mean_acov(1)) / var_plus;
  rho[1] = rho_odd;
  long t = 1;
  const long nl = static_cast<long>(n);
  while (t < nl - 4 && rho_even + rho_odd > 0.0) {
    rho_even = 1.0 - (mean_var - mean_acov(t + 1)) / var_plus;
    rho_odd = 1.0 - (mean_var - mean_acov(t + 2)) / var_plus;
    if (rho_even + rho_odd >= 0.0) {
      rho[t + 1] = rho_even;
      rho[t + 2] = rho_odd;
    }
    t += 2;
  }
  const long max_t = t;
  if (rho_even > 0.0) rho[max_t + 1] = rho_even;

  // Initial monotone sequence.
  for (long s = 1; s <= max_t - 3; s += 2) {
    if (rho[s + 1] + rho[s + 2] > rho[s - 1] + rho[s]) {
      rho[s + 1] = (rho[s - 1] + rho[s]) / 2.0;
      rho[s + 2] = rho[s + 1];
    }
  }
  const double total = static_cast<double>(m * n);
  double tau = -1.0 + rho[max_t + 1];
  for (long s = 0; s < max_t; ++s) tau += 2.0 * rho[s];
  tau = std::max(tau, 1.0 / std::log10(total));
  return std::min(total / tau, total);
}

ParamSummary summarize_values(std::string name, const Chains& c) {
  ParamSummary s;
  s.name = std::move(name);
  std::vector<double> all;
  for (const auto& ch : c) all.insert(all.end(), ch.begin(), ch.end());
  s.mean = stats::mean(all);
  s.sd = stats::sample_sd(all);
  std::vector<double> sorted = all;
  std::sort(sorted.begin(), sorted.end());
  s.q025 = stats::quantile_sorted(sorted, 0.025);
  s.q50 = stats::quantile_sorted(sorted, 0.5);
  s.q975 = stats::quantile_sorted(sorted, 0.975);
  const auto d = diagnose_chains(c);
  s.rhat = d.rhat;
  s.ess_bulk = d.ess_bulk;
  s.mcse_mean = s.sd > 0.0 ? s.sd / std::sqrt(d.ess_bulk) : 0.0;
  if (s.sd > 0.0 && c.front().size() >= 4) {
    Chains sq = c;
    for (auto& ch : sq) {
      for (double& v : ch) v = (v - s.mean) * (v - s.mean);
    }
    std::vector<double> flat;
    for (const auto& ch : sq) flat.insert(flat.end(), ch.begin(), ch.end());
    const double sd_sq = stats::sample_sd(flat);
    const double ess_sq = ess_raw(sq);
    s.mcse_sd = std::isfinite(ess_sq) ? sd_sq / std::sqrt(ess_sq) / (2.0 * s.sd) : kNaN;
  } else if (s.sd > 0.0) {
    s.mcse_sd = kNaN;
  }
  return s;
}

Chains chains_of(const Draws& dr, std::size_t p) {
  Chains c(dr.chains);
  for (std::size_t k = 0; k < dr.chains; ++k) c[k] = dr.chain_column(k, p);
  return c;
}

}  // namespace

std::vector<double> Draws::chain_column(std::size_t chain, std::size_t param) const {
  std::vector<double> out(draws);
  for (std::size_t i = 0; i < draws; ++i) out[i] = at(chain, i, param);
  return out;
}

std::vector<double> Draws::column(std::size_t param) const {
  std::vector<double> out;
  out.reserve(total());
  for (std::size_t c = 0; c < chains; ++c) {
    for (std::size_t i = 0; i < draws; ++i) out.push_back(at(c, i, param));
  }
  return out;
}

std::optional<std::size_t> Draws::index_of(std::string_view name) const {
  for (std::size_t i = 0; i < names.size(); ++i) {
    if (names[i] == name) return i;
  }
  return std::nullopt;
}

std::size_t Draws::divergences() const {
  return static_cast<std::size_t>(std::count(divergent.begin(), divergent.end(), std::uint8_t{1}));
}

double ess_basic(const std::vector<std::vector<double>>& chains) {
  if (chains.empty() || chains.front().empty()) return kNaN;
  return ess_raw(chains);
}

Diagnostic diagnose_chains(const std::vector<std::vector<double>>& chains) {
  if (chains.empty() || chains.front().size() < 4) return {kNaN, kNaN};
  for (const auto& ch : chains) {
    if (ch.size() != chains.front().size()) return {kNaN, kNaN};
  }
  if (is_constant(chains)) return {kInf, kNaN};
  const auto split = split_chains(chains);
  const double rhat_bulk = rhat_basic(z_scale(split));
  const double rhat_tail = rhat_basic(z_scale(fold(split)));
  // Ranks cap R-hat for fully separated chains; the classic split value does not.
  const double rhat_classic = rhat_basic(split);
  const double ess = ess_raw(z_scale(split));
  // Reported over the draws actually supplied (the split may drop middle draws).
  std::size_t total = 0;
  for (const auto& ch : chains) total += ch.size();
  return {std::max({rhat_bulk, rhat_tail, rhat_classic}), std::min(ess, static_cast<double>(total))};
}

std::vector<Diagnostic> diagnostics(const Draws& dr) {
  std::vector<Diagnostic> out;
  out.reserve(dr.num_params());
  for (std::size_t p = 0; p < dr.num_params(); ++p) out.push_back(diagnose_chains(chains_of(dr, p)));
  return out;
}

std::string_view to_string(TransformKind t) {
  return t == TransformKind::exp ? "exp" : "inv_logit";
}

std::optional<TransformKind> parse_transform(std::string_view s) {
  if (s == "exp") return TransformKind::exp;
  if (s == "inv_logit" || s == "inv-logit") return TransformKind::inv_logit;
  return std::nullopt;
}

const ParamSummary* FitSummary::find(std::string_view name) const {
  for (const auto& p : params) {
    if (p.name == name) return &p;
  }
  for (const auto& p : transformed) {
    if (p.name == name) return &p;
  }
  return nullptr;
}

FitSummary summarize(const Draws& dr, const std::vector<TransformRequest>& transforms,
                     const std::vector<std::string>& study_ids) {
  FitSummary s;
  s.chains = dr.chains;
  s.draws_per_chain = dr.draws;
  s.divergences = dr.divergences();
  if (dr.total() == 0) {
    s.converged = false;
    s.warnings.push_back("no draws");
    return s;
  }
  for (std::size_t p = 0; p < dr.num_params(); ++p)
    s.params.push_back(summarize_values(dr.names[p], chains_of(dr, p)));

  for (const auto& t : transforms) {
    const auto idx = dr.index_of(t.param);
    if (!idx) throw ValidationError("cannot transform unknown parameter '" + t.param + "'");
    Chains c = chains_of(dr, *idx);
    for (auto& ch : c) {
      for (double& v : ch) v = t.kind == TransformKind::exp ? std::exp(v) : stats::inv_logit(v);
    }
    s.transformed.push_back(
        summarize_values(std::string(to_string(t.kind)) + "(" + t.param + ")", c));
  }

  for (std::size_t j = 0;; ++j) {
    const auto label = "[" + std::to_string(j + 1) + "]";
    const auto ti = dr.index_of("theta" + label);
    if (!ti) break;
    StudySummary st;
    st.id = j < study_ids.size() ? study_ids[j] : std::to_string(j + 1);
    st.theta_mean = s.params[*ti].mean;
    st.theta_sd = s.params[*ti].sd;
    if (const auto bi = dr.index_of("b" + label)) {
      st.b_mean = s.params[*bi].mean;
      st.b_sd = s.params[*bi].sd;
    }
    s.studies.push_back(std::move(st));
  }

  const double ess_min = kEssPerChain * static_cast<double>(dr.chains);
  for (const auto& p : s.params) {
    if (p.sd == 0.0) continue;  // constant quantities carry no convergence information
    if (!(p.rhat <= kRhatThreshold)) {
      s.converged = false;
      s.warnings.push_back("R-hat above threshold for " + p.name);
    }
    if (!(p.ess_bulk >= ess_min)) {
      s.converged = false;
      s.warnings.push_back("bulk ESS below threshold for " + p.name);
    }
  }
  if (static_cast<double>(s.divergences) > kMaxDivergentFraction * static_cast<double>(dr.total())) {
    s.converged = false;
    s.warnings.push_back(std::to_string(s.divergences) + " divergent transitions");
  }
  return s;
}

}  // namespace shambayes
