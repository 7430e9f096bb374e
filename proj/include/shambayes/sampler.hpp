#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "shambayes/model.hpp"
#include "shambayes/rng.hpp"

namespace shambayes {

struct SamplerConfig {
  int chains = 4;
  int warmup = 1000;
  int draws = 1000;  // retained draws per chain
  double target_accept = 0.8;
  int max_leapfrog = 1024;  // tree depth limit is floor(log2(max_leapfrog))
  std::uint64_t seed = kDefaultSeed;
  std::size_t threads = 0;  // 0: one worker per hardware thread

  bool operator==(const SamplerConfig&) const = default;
};

/// Throws ValidationError for non-positive counts or target outside (0, 1).
void validate(const SamplerConfig& c);

/// Posterior draws on the constrained scale, stored chain-major:
/// values[(chain * draws + iteration) * num_params + param].
struct Draws {
  std::vector<std::string> names;
  std::size_t chains = 0;
  std::size_t draws = 0;
  std::vector<double> values;
  std::vector<std::uint8_t> divergent;  // chains * draws

  std::size_t num_params() const noexcept { return names.size(); }
  std::size_t total() const noexcept { return chains * draws; }
  double at(std::size_t chain, std::size_t iter, std::size_t param) const {
    return values[(chain * draws + iter) * names.size() + param];
  }
  std::vector<double> chain_column(std::size_t chain, std::size_t param) const;
  /// All chains concatenated in chain order.
  std::vector<double> column(std::size_t param) const;
  std::optional<std::size_t> index_of(std::string_view name) const;
  std::size_t divergences() const;

  bool operator==(const Draws&) const = default;
};

struct Diagnostic {
  double rhat = 0.0;      // max of rank-normalized (bulk, folded) and classic split R-hat; +inf for constant chains
  double ess_bulk = 0.0;  // capped at the total number of draws
};

/// Split R-hat and bulk ESS of one quantity given as one vector per chain.
/// Requires at least 4 draws per chain; fewer gives NaN values.
Diagnostic diagnose_chains(const std::vector<std::vector<double>>& chains);
std::vector<Diagnostic> diagnostics(const Draws& dr);

/// ESS of the raw (not rank-normalized) series, capped at the draw count.
double ess_basic(const std::vector<std::vector<double>>& chains);

struct ParamSummary {
  std::string name;
  double mean = 0.0;
  double sd = 0.0;
  double q025 = 0.0;
  double q50 = 0.0;
  double q975 = 0.0;
  double rhat = 0.0;
  double ess_bulk = 0.0;
  double mcse_mean = 0.0;  // sd / sqrt(ess_bulk)
  double mcse_sd = 0.0;    // from the ESS of squared deviations

  bool operator==(const ParamSummary&) const = default;
};

struct StudySummary {
  std::string id;
  double theta_mean = 0.0;
  double theta_sd = 0.0;
  std::optional<double> b_mean;
  std::optional<double> b_sd;

  bool operator==(const StudySummary&) const = default;
};

enum class TransformKind { exp, inv_logit };
std::string_view to_string(TransformKind t);
std::optional<TransformKind> parse_transform(std::string_view s);

struct TransformRequest {
  std::string param;
  TransformKind kind = TransformKind::exp;
};

/// Convergence thresholds; reported, never enforced.
inline constexpr double kRhatThreshold = 1.01;
inline constexpr double kEssPerChain = 100.0;
inline constexpr double kMaxDivergentFraction = 0.001;

struct FitSummary {
  std::vector<ParamSummary> params;
  /// Draw-wise transformed quantities, named e.g. "exp(mu_theta)".
  std::vector<ParamSummary> transformed;
  std::vector<StudySummary> studies;
  std::size_t chains = 0;
  std::size_t draws_per_chain = 0;
  std::size_t divergences = 0;
  bool converged = true;
  std::vector<std::string> warnings;

  const ParamSummary* find(std::string_view name) const;
  bool operator==(const FitSummary&) const = default;
};

/// Moments, quantiles and diagnostics per parameter. Study ids, when given,
/// label the per-study theta[j] / b[j] summaries.
FitSummary summarize(const Draws& dr, const std::vector<TransformRequest>& transforms = {},
                     const std::vector<std::string>& study_ids = {});

struct ChainInfo {
  double step_size = 0.0;
  double mean_accept = 0.0;
  double mean_leapfrog = 0.0;
  std::vector<double> inv_metric;
  std::size_t init_attempts = 0;
};

struct FitResult {
  Draws draws;
  FitSummary summary;
  std::vector<ChainInfo> chain_info;
};

/// Multinomial NUTS with dual-averaging step size and windowed diagonal
/// metric adaptation. Deterministic given config.seed, whatever the number of
/// threads. Throws ModelError when no finite starting point is found.
FitResult fit(const Model& model, const SamplerConfig& config,
              const std::vector<TransformRequest>& transforms = {});
FitResult fit(const ModelSpec& spec, const Dataset& data, const SamplerConfig& config,
              const std::vector<TransformRequest>& transforms = {});

}  // namespace shambayes
