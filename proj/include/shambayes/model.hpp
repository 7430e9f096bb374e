#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "shambayes/study_data.hpp"

namespace shambayes {

/// Non-finite parameters or a kernel matrix that is not positive definite.
class ModelError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Variant {
  normal_default,  // independent normal populations for theta and b
  correlated,      // bivariate normal population for (theta_j, b_j)
  binomial,        // binomial likelihood on raw counts, logit link
  diff_meta,       // hierarchical model on the differences y1 - y0 only
  no_pool_theta,   // flat density on theta_j, b pooled
  no_pool_both,    // flat densities on theta_j and b_j
  gp_se,           // theta ~ GP with squared-exponential kernel over x
  gp_periodic,     // theta ~ GP with periodic kernel over x
  linear_trend,    // theta_j ~ normal(a + b_slope x_j, sigma_theta)
};

std::string_view to_string(Variant v);
std::optional<Variant> parse_variant(std::string_view s);

enum class PriorKind {
  uniform,    // improper flat hyperpriors
  weak,       // normal(0,1) on means, half-normal(0,1) on scales
  automatic,  // weak when J < 15, uniform otherwise
};

std::string_view to_string(PriorKind p);
std::optional<PriorKind> parse_prior(std::string_view s);
PriorKind resolve_prior(PriorKind p, std::size_t num_studies);

enum class KernelKind { se, periodic };

/// Hyperpriors for the GP variants. These are configurable defaults chosen
/// for frequencies measured in Hz, not estimates from any dataset.
struct GpPriorConfig {
  double alpha_scale = 0.2;          // alpha ~ half-normal(0, alpha_scale)
  double ell_median = 50.0;          // ell ~ lognormal(log ell_median, ell_log_sd)
  double ell_log_sd = 1.0;
  double period_median = 30.0;       // period ~ lognormal(log period_median, period_log_sd)
  double period_log_sd = 1.0;

  bool operator==(const GpPriorConfig&) const = default;
};

/// Population-level parameters. Only the fields used by a variant matter.
struct HyperParams {
  double mu_theta = 0.0;
  double sigma_theta = 1.0;
  double mu_b = 0.0;
  double sigma_b = 1.0;
  double rho = 0.0;
  double alpha = 1.0;
  double ell = 1.0;
  double period = 30.0;
  double a = 0.0;
  double b_slope = 0.0;

  bool operator==(const HyperParams&) const = default;
};

struct ModelSpec {
  Variant variant = Variant::normal_default;
  PriorKind prior = PriorKind::automatic;
  GpPriorConfig gp;
  /// When set, hyperparameters are held at these values and only the
  /// latent effects are sampled.
  std::optional<HyperParams> fixed_hyper;

  bool operator==(const ModelSpec&) const = default;
};

std::string model_spec_to_json(const ModelSpec& m);
ModelSpec model_spec_from_json(std::string_view text);

/// Per-study effects on the constrained scale plus the standard-normal
/// coordinates they were built from. Vectors not used by a variant are empty.
struct LatentState {
  std::vector<double> theta;
  std::vector<double> b;
  std::vector<double> raw_theta;
  std::vector<double> raw_b;
};

/// Indices of the hyperparameters that may appear in a parameter vector.
enum class Hyper : int { mu_theta, sigma_theta, mu_b, sigma_b, rho, alpha, ell, period, a, b_slope };
inline constexpr int kNumHyper = 10;

std::string_view hyper_name(Hyper h);

/// Maps an unconstrained flat vector to named model quantities.
///
/// Layout: latent blocks first (theta coordinates, then b coordinates), then
/// the free hyperparameters in Hyper order. Scales are stored as logs and the
/// correlation as atanh(rho).
class ParamLayout {
 public:
  ParamLayout(const ModelSpec& spec, std::size_t num_studies);

  std::size_t num_studies() const noexcept { return J_; }
  std::size_t dimension() const noexcept { return dim_; }

  bool theta_is_raw() const noexcept { return theta_raw_; }
  bool has_b() const noexcept { return b_off_ >= 0; }
  bool b_is_raw() const noexcept { return b_raw_; }
  std::ptrdiff_t theta_offset() const noexcept { return theta_off_; }
  std::ptrdiff_t b_offset() const noexcept { return b_off_; }

  /// Position of a hyperparameter in the vector, or -1 when absent.
  int slot(Hyper h) const noexcept { return slot_[static_cast<int>(h)]; }
  /// Hyperparameters the variant uses, whether free or fixed.
  const std::vector<Hyper>& used_hypers() const noexcept { return used_; }

  std::vector<std::string> unconstrained_names() const;
  /// Names of the values produced by Model::constrained: used hyperparameters
  /// (free ones only), then theta[1..J], then b[1..J] when present.
  std::vector<std::string> constrained_names() const;

 private:
  std::size_t J_ = 0;
  std::size_t dim_ = 0;
  std::ptrdiff_t theta_off_ = 0;
  std::ptrdiff_t b_off_ = -1;
  bool theta_raw_ = true;
  bool b_raw_ = true;
  std::array<int, kNumHyper> slot_{};
  std::vector<Hyper> used_;
};

/// Kernel matrix with diagonal jitter 1e-8 * alpha^2.
///   se:       alpha^2 exp(-(x_i - x_j)^2 / (2 ell^2))
///   periodic: alpha^2 exp(-2 sin^2(pi |x_i - x_j| / period) / ell^2)
Eigen::MatrixXd kernel_matrix(KernelKind kind, std::span<const double> x, double alpha, double ell,
                              double period);

inline constexpr double kKernelJitter = 1e-8;

/// A model bound to a dataset. Evaluation is const and thread-safe.
class Model {
 public:
  Model(ModelSpec spec, Dataset data);

  const ModelSpec& spec() const noexcept { return spec_; }
  const Dataset& data() const noexcept { return data_; }
  const ParamLayout& layout() const noexcept { return layout_; }
  PriorKind prior() const noexcept { return prior_; }
  std::size_t dimension() const noexcept { return layout_.dimension(); }

  /// Log posterior on the unconstrained scale, including Jacobian terms.
  /// Throws ModelError for non-finite input or a singular kernel.
  double log_posterior(std::span<const double> params) const;
  std::vector<double> gradient(std::span<const double> params) const;

  /// Value and gradient in one pass. Returns -inf (and leaves `grad`
  /// unspecified) instead of throwing; this is the sampler's entry point.
  double log_posterior_gradient(std::span<const double> params, std::span<double> grad) const;

  /// Centred density on the constrained scale: likelihood, population
  /// density of (theta, b), and hyperprior, with no change-of-variable terms.
  double log_density_constrained(const HyperParams& h, std::span<const double> theta,
                                 std::span<const double> b) const;
  /// log |d(constrained) / d(unconstrained)| at `params`, covering both the
  /// latent reparameterization and the hyperparameter transforms.
  double log_abs_det_jacobian(std::span<const double> params) const;

  HyperParams hyper(std::span<const double> params) const;
  LatentState latent(std::span<const double> params) const;
  /// Inverse of (hyper, latent): builds the unconstrained vector from
  /// constrained hyperparameters and effects.
  std::vector<double> pack(const HyperParams& h, std::span<const double> theta,
                           std::span<const double> b) const;

  /// Constrained values in layout().constrained_names() order.
  std::vector<double> constrained(std::span<const double> params) const;

 private:
  double evaluate(std::span<const double> params, double* grad) const;
  Eigen::MatrixXd gp_correlation_cholesky(double ell, double period, bool& ok) const;
  void check_finite(std::span<const double> params) const;

  ModelSpec spec_;
  Dataset data_;
  PriorKind prior_;
  ParamLayout layout_;
  // Cached data columns.
  std::vector<double> y1_, s1_, y0_, s0_, x_;
  std::vector<double> sdiff_;
  std::vector<double> n1_, N1_, n0_, N0_, lchoose_;
};

/// Convenience wrappers that bind a Model for a single evaluation.
double log_posterior(const ModelSpec& m, const Dataset& d, std::span<const double> params);
std::vector<double> gradient(const ModelSpec& m, const Dataset& d, std::span<const double> params);

}  // namespace shambayes
