#include "shambayes/sim.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "shambayes/detail/parallel.hpp"
#include "shambayes/stats.hpp"

namespace shambayes {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

double sign(double v) { return (v > 0.0) - (v < 0.0); }

Metrics metrics_from(const std::vector<double>& est, const std::vector<bool>& significant,
                     const std::vector<double>& truths) {
  if (est.size() != truths.size() || est.empty())
    throw ValidationError("estimates and truths must have the same non-zero length");
  const double J = static_cast<double>(est.size());
  std::size_t n_sig = 0, n_wrong = 0;
  double sq = 0.0;
  for (std::size_t j = 0; j < est.size(); ++j) {
    if (significant[j]) {
      ++n_sig;
      if (sign(est[j]) != sign(truths[j])) ++n_wrong;
    }
    sq += (est[j] - truths[j]) * (est[j] - truths[j]);
  }
  Metrics m;
  m.prop_significant = static_cast<double>(n_sig) / J;
  m.type_s_rate = n_sig > 0 ? static_cast<double>(n_wrong) / static_cast<double>(n_sig) : kNaN;
  m.rmse = std::sqrt(sq / J);
  m.rank_corr = est.size() > 1 ? stats::spearman(est, truths) : kNaN;
  return m;
}

ReplicateOutcome run_estimator(const SimConfig& cfg, Method method, const Replicate& rep,
                               std::uint64_t fit_seed) {
  ReplicateOutcome out;
  try {
    switch (method) {
      case Method::exposed_only: out.metrics = evaluate_metrics(exposed_only(rep.data), rep.theta); break;
      case Method::difference: out.metrics = evaluate_metrics(difference(rep.data), rep.theta); break;
      case Method::bayes: {
        SamplerConfig sc = cfg.bayes_sampler;
        sc.seed = fit_seed;
        sc.threads = 1;
        const auto r = fit(cfg.bayes_model, rep.data, sc);
        std::vector<Interval> iv;
        for (std::size_t j = 0; j < rep.theta.size(); ++j) {
          const auto* p = r.summary.find("theta[" + std::to_string(j + 1) + "]");
          iv.push_back({p->mean, p->q025, p->q975});
        }
        out.metrics = evaluate_metrics(iv, rep.theta);
        out.converged = r.summary.converged;
        break;
      }
      case Method::linear_adjust:
        throw ValidationError("linear-adjust is not a simulation estimator");
    }
  } catch (const ValidationError&) {
    throw;
  } catch (const std::exception&) {
    out.failed = true;
  }
  return out;
}

MetricStat aggregate(const std::vector<ReplicateOutcome>& reps, MetricKind k) {
  std::vector<double> v;
  for (const auto& r : reps) {
    if (r.failed) continue;
    const double x = get(r.metrics, k);
    if (std::isfinite(x)) v.push_back(x);
  }
  MetricStat s;
  s.n_used = v.size();
  if (v.empty()) {
    s.value = kNaN;
    s.mc_se = kNaN;
    return s;
  }
  s.value = stats::mean(v);
  s.mc_se = v.size() > 1 ? stats::sample_sd(v) / std::sqrt(static_cast<double>(v.size())) : kNaN;
  return s;
}

}  // namespace

std::string_view to_string(ThetaSource s) {
  switch (s) {
    case ThetaSource::posterior_draws: return "posterior-draws";
    case ThetaSource::fixed_vector: return "fixed";
    case ThetaSource::raw_observed: return "raw";
  }
  return "unknown";
}

std::optional<ThetaSource> parse_theta_source(std::string_view s) {
  if (s == "posterior-draws" || s == "draws") return ThetaSource::posterior_draws;
  if (s == "fixed") return ThetaSource::fixed_vector;
  if (s == "raw" || s == "raw-observed") return ThetaSource::raw_observed;
  return std::nullopt;
}

std::string_view to_string(Noise n) { return n == Noise::normal ? "normal" : "t"; }

std::optional<Noise> parse_noise(std::string_view s) {
  if (s == "normal") return Noise::normal;
  if (s == "t") return Noise::t;
  return std::nullopt;
}

std::string_view to_string(MetricKind k) {
  switch (k) {
    case MetricKind::prop_significant: return "prop_significant";
    case MetricKind::type_s_rate: return "type_s_rate";
    case MetricKind::rmse: return "rmse";
    case MetricKind::rank_corr: return "rank_corr";
  }
  return "unknown";
}

double get(const Metrics& m, MetricKind k) {
  switch (k) {
    case MetricKind::prop_significant: return m.prop_significant;
    case MetricKind::type_s_rate: return m.type_s_rate;
    case MetricKind::rmse: return m.rmse;
    case MetricKind::rank_corr: return m.rank_corr;
  }
  return kNaN;
}

std::size_t available_studies(const SimConfig& cfg) {
  switch (cfg.theta_source) {
    case ThetaSource::posterior_draws: return cfg.theta_draws.empty() ? 0 : cfg.theta_draws.front().size();
    case ThetaSource::fixed_vector: return cfg.theta_fixed.size();
    case ThetaSource::raw_observed: return cfg.observed_y1.size();
  }
  return 0;
}

void validate(const SimConfig& cfg) {
  const std::size_t J = available_studies(cfg);
  if (J == 0) throw ValidationError("theta source provides no studies");
  if (cfg.theta_source == ThetaSource::posterior_draws) {
    for (const auto& row : cfg.theta_draws) {
      if (row.size() != J) throw ValidationError("theta draws have inconsistent lengths");
    }
  }
  if (cfg.sigma_b_grid.empty()) throw ValidationError("sigma_b grid is empty");
  for (double s : cfg.sigma_b_grid) {
    if (!(s >= 0.0) || !std::isfinite(s)) throw ValidationError("sigma_b grid values must be finite and >= 0");
  }
  if (cfg.replicates < 1) throw ValidationError("replicates must be positive");
  if (!(cfg.sigma_y > 0.0) || !std::isfinite(cfg.sigma_y)) throw ValidationError("sigma_y must be positive");
  if (!std::isfinite(cfg.mu_b)) throw ValidationError("mu_b must be finite");
  if (cfg.size && (*cfg.size < 1 || *cfg.size > J))
    throw ValidationError("size M must lie between 1 and the " + std::to_string(J) + " available studies");
  if (cfg.noise == Noise::t) {
    if (cfg.n1.size() != J || cfg.n0.size() != J)
      throw ValidationError("t noise requires per-study sample sizes n1 and n0");
    for (std::size_t j = 0; j < J; ++j) {
      if (cfg.n1[j] < 2 || cfg.n0[j] < 2) throw ValidationError("sample sizes must be at least 2");
    }
  }
  if (!cfg.x.empty() && cfg.x.size() != J) throw ValidationError("covariate length does not match the theta source");
  if (cfg.estimators.empty()) throw ValidationError("no estimators selected");
  for (Method m : cfg.estimators) {
    if (m == Method::linear_adjust) throw ValidationError("linear-adjust is not a simulation estimator");
  }
  for (std::size_t i = 0; i < cfg.estimators.size(); ++i) {
    for (std::size_t k = 0; k < i; ++k) {
      if (cfg.estimators[i] == cfg.estimators[k]) throw ValidationError("estimators must be distinct");
    }
  }
  validate(cfg.bayes_sampler);
}

std::vector<std::vector<double>> theta_rows(const Draws& d) {
  std::vector<std::size_t> cols;
  for (std::size_t j = 0;; ++j) {
    const auto i = d.index_of("theta[" + std::to_string(j + 1) + "]");
    if (!i) break;
    cols.push_back(*i);
  }
  if (cols.empty()) throw ValidationError("draws contain no theta[j] columns");
  std::vector<std::vector<double>> rows;
  rows.reserve(d.total());
  for (std::size_t c = 0; c < d.chains; ++c) {
    for (std::size_t i = 0; i < d.draws; ++i) {
      std::vector<double> row;
      row.reserve(cols.size());
      for (auto k : cols) row.push_back(d.at(c, i, k));
      rows.push_back(std::move(row));
    }
  }
  return rows;
}

Replicate simulate_replicate(const SimConfig& cfg, double sigma_b, Rng& rng) {
  validate(cfg);
  if (!(sigma_b >= 0.0) || !std::isfinite(sigma_b)) throw ValidationError("sigma_b must be finite and >= 0");
  const std::size_t J = available_studies(cfg);
  const std::size_t M = cfg.size.value_or(J);

  std::vector<std::size_t> indices;
  if (M < J) {
    std::vector<std::size_t> all(J);
    std::iota(all.begin(), all.end(), 0);
    // Partial Fisher-Yates: the first M positions become a uniform subset.
    for (std::size_t i = 0; i < M; ++i) {
      const std::size_t k = i + std::uniform_int_distribution<std::size_t>(0, J - 1 - i)(rng);
      std::swap(all[i], all[k]);
    }
    indices.assign(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(M));
    std::sort(indices.begin(), indices.end());
  } else {
    indices.resize(J);
    std::iota(indices.begin(), indices.end(), 0);
  }

  const std::vector<double>* source = nullptr;
  switch (cfg.theta_source) {
    case ThetaSource::posterior_draws: {
      const std::size_t row = std::uniform_int_distribution<std::size_t>(0, cfg.theta_draws.size() - 1)(rng);
      source = &cfg.theta_draws[row];
      break;
    }
    case ThetaSource::fixed_vector: source = &cfg.theta_fixed; break;
    case ThetaSource::raw_observed: source = &cfg.observed_y1; break;
  }

  auto noise = [&](double mean, int n) {
    if (cfg.noise == Noise::normal) return mean + cfg.sigma_y * std_normal(rng);
    return mean + cfg.sigma_y * std::student_t_distribution<double>(n - 1.0)(rng);
  };

  std::vector<StudyRecord> records;
  std::vector<double> thetas, bs;
  for (std::size_t k = 0; k < M; ++k) {
    const std::size_t j = indices[k];
    const double theta = (*source)[j];
    const double b = cfg.mu_b + sigma_b * std_normal(rng);
    thetas.push_back(theta);
    bs.push_back(b);
    StudyRecord r;
    r.id = "sim" + std::to_string(j + 1);
    if (!cfg.x.empty()) r.x = cfg.x[j];
    const int n0 = cfg.n0.empty() ? 0 : cfg.n0[j];
    const int n1 = cfg.n1.empty() ? 0 : cfg.n1[j];
    r.y0 = noise(b, n0);
    r.y1 = noise(theta + b, n1);
    r.s0 = cfg.sigma_y;
    r.s1 = cfg.sigma_y;
    if (n1 >= 2) r.n1 = n1;
    if (n0 >= 2) r.n0 = n0;
    records.push_back(std::move(r));
  }
  return {std::move(indices), std::move(thetas), std::move(bs), Dataset(std::move(records))};
}

Metrics evaluate_metrics(const EstimateSet& e, const std::vector<double>& truths) {
  std::vector<double> est;
  std::vector<bool> sig;
  for (const auto& x : e.entries) {
    est.push_back(x.estimate);
    sig.push_back(x.estimate - 1.96 * x.se > 0.0 || x.estimate + 1.96 * x.se < 0.0);
  }
  return metrics_from(est, sig, truths);
}

Metrics evaluate_metrics(const std::vector<Interval>& e, const std::vector<double>& truths) {
  std::vector<double> est;
  std::vector<bool> sig;
  for (const auto& x : e) {
    est.push_back(x.estimate);
    sig.push_back(x.lower > 0.0 || x.upper < 0.0);
  }
  return metrics_from(est, sig, truths);
}

const GridCell* MetricsGrid::find(double sigma_b, Method m) const {
  for (const auto& c : cells) {
    if (c.sigma_b == sigma_b && c.estimator == m) return &c;
  }
  return nullptr;
}

MetricsGrid run_grid(const SimConfig& cfg) {
  validate(cfg);
  const std::size_t G = cfg.sigma_b_grid.size();
  const std::size_t R = static_cast<std::size_t>(cfg.replicates);
  const std::size_t E = cfg.estimators.size();
  // outcomes[(g * R + r) * E + e]
  std::vector<ReplicateOutcome> outcomes(G * R * E);
  detail::parallel_for(G * R, cfg.threads, [&](std::size_t task) {
    const std::size_t g = task / R, r = task % R;
    Rng rng(derive_seed(cfg.seed, {g, r}));
    const auto rep = simulate_replicate(cfg, cfg.sigma_b_grid[g], rng);
    const std::uint64_t fit_seed = derive_seed(cfg.seed, {g, r, 0xb7e5ULL});
    for (std::size_t e = 0; e < E; ++e)
      outcomes[task * E + e] = run_estimator(cfg, cfg.estimators[e], rep, fit_seed);
  });

  MetricsGrid grid;
  for (std::size_t g = 0; g < G; ++g) {
    for (std::size_t e = 0; e < E; ++e) {
      GridCell cell;
      cell.sigma_b = cfg.sigma_b_grid[g];
      cell.estimator = cfg.estimators[e];
      cell.n_replicates = R;
      for (std::size_t r = 0; r < R; ++r) {
        const auto& o = outcomes[(g * R + r) * E + e];
        cell.replicates.push_back(o);
        cell.n_failed += o.failed;
        cell.n_nonconverged += !o.failed && !o.converged;
      }
      for (int k = 0; k < kNumMetrics; ++k)
        cell.stats[k] = aggregate(cell.replicates, static_cast<MetricKind>(k));
      grid.cells.push_back(std::move(cell));
    }
  }
  return grid;
}

}  // namespace shambayes
