#include "shambayes/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include <json.hpp>

#include "shambayes/stats.hpp"

namespace shambayes {

namespace {

using stats::kLogSqrt2Pi;
constexpr double kNegInf = -std::numeric_limits<double>::infinity();
constexpr double kLog2 = std::numbers::ln2;

enum class ThetaMode { hier, trend, gp, free };
enum class BMode { hier, free, none };
enum class Likelihood { normal_pair, difference, binomial };

ThetaMode theta_mode(Variant v) {
  switch (v) {
    case Variant::linear_trend: return ThetaMode::trend;
    case Variant::gp_se:
    case Variant::gp_periodic: return ThetaMode::gp;
    case Variant::no_pool_theta:
    case Variant::no_pool_both: return ThetaMode::free;
    default: return ThetaMode::hier;
  }
}

BMode b_mode(Variant v) {
  switch (v) {
    case Variant::diff_meta: return BMode::none;
    case Variant::no_pool_both: return BMode::free;
    default: return BMode::hier;
  }
}

Likelihood likelihood_of(Variant v) {
  switch (v) {
    case Variant::diff_meta: return Likelihood::difference;
    case Variant::binomial: return Likelihood::binomial;
    default: return Likelihood::normal_pair;
  }
}

std::vector<Hyper> hypers_of(Variant v) {
  using H = Hyper;
  switch (v) {
    case Variant::normal_default:
    case Variant::binomial: return {H::mu_theta, H::sigma_theta, H::mu_b, H::sigma_b};
    case Variant::correlated: return {H::mu_theta, H::sigma_theta, H::mu_b, H::sigma_b, H::rho};
    case Variant::diff_meta: return {H::mu_theta, H::sigma_theta};
    case Variant::no_pool_theta: return {H::mu_b, H::sigma_b};
    case Variant::no_pool_both: return {};
    case Variant::gp_se: return {H::mu_theta, H::mu_b, H::sigma_b, H::alpha, H::ell};
    case Variant::gp_periodic:
      return {H::mu_theta, H::mu_b, H::sigma_b, H::alpha, H::ell, H::period};
    case Variant::linear_trend: return {H::sigma_theta, H::mu_b, H::sigma_b, H::a, H::b_slope};
  }
  return {};
}

enum class Transform { identity, log, atanh };

Transform transform_of(Hyper h) {
  switch (h) {
    case Hyper::sigma_theta:
    case Hyper::sigma_b:
    case Hyper::alpha:
    case Hyper::ell:
    case Hyper::period: return Transform::log;
    case Hyper::rho: return Transform::atanh;
    default: return Transform::identity;
  }
}

double& field(HyperParams& p, Hyper h) {
  switch (h) {
    case Hyper::mu_theta: return p.mu_theta;
    case Hyper::sigma_theta: return p.sigma_theta;
    case Hyper::mu_b: return p.mu_b;
    case Hyper::sigma_b: return p.sigma_b;
    case Hyper::rho: return p.rho;
    case Hyper::alpha: return p.alpha;
    case Hyper::ell: return p.ell;
    case Hyper::period: return p.period;
    case Hyper::a: return p.a;
    case Hyper::b_slope: return p.b_slope;
  }
  return p.mu_theta;
}

double field(const HyperParams& p, Hyper h) { return field(const_cast<HyperParams&>(p), h); }

double to_constrained(Transform t, double u) {
  switch (t) {
    case Transform::log: return std::exp(u);
    case Transform::atanh: return std::tanh(u);
    default: return u;
  }
}

double to_unconstrained(Transform t, double v) {
  switch (t) {
    case Transform::log: return std::log(v);
    case Transform::atanh: return std::atanh(v);
    default: return v;
  }
}

/// log |dv/du| and its derivative with respect to u.
void transform_jacobian(Transform t, double u, double v, double& logj, double& dlogj) {
  switch (t) {
    case Transform::log:
      logj = u;
      dlogj = 1.0;
      return;
    case Transform::atanh:
      logj = std::log1p(-v * v);
      dlogj = -2.0 * v;
      return;
    default:
      logj = 0.0;
      dlogj = 0.0;
  }
}

double half_normal_lpdf(double x, double scale, double* d) {
  if (d) *d = -x / (scale * scale);
  const double z = x / scale;
  return kLog2 - kLogSqrt2Pi - std::log(scale) - 0.5 * z * z;
}

double normal01_lpdf(double x, double* d) {
  if (d) *d = -x;
  return -kLogSqrt2Pi - 0.5 * x * x;
}

double lognormal_lpdf(double x, double median, double log_sd, double* d) {
  const double z = (std::log(x) - std::log(median)) / log_sd;
  if (d) *d = -1.0 / x - z / (log_sd * x);
  return -kLogSqrt2Pi - std::log(log_sd) - std::log(x) - 0.5 * z * z;
}

/// Hyperprior log density on the constrained scale and its derivative.
double hyperprior(Hyper h, double v, PriorKind prior, const GpPriorConfig& gp, double* d) {
  if (d) *d = 0.0;
  switch (h) {
    case Hyper::mu_theta:
    case Hyper::mu_b:
    case Hyper::a:
      return prior == PriorKind::weak ? normal01_lpdf(v, d) : 0.0;
    case Hyper::sigma_theta:
    case Hyper::sigma_b:
      return prior == PriorKind::weak ? half_normal_lpdf(v, 1.0, d) : 0.0;
    case Hyper::b_slope: return 0.0;
    case Hyper::rho: return -kLog2;
    case Hyper::alpha: return half_normal_lpdf(v, gp.alpha_scale, d);
    case Hyper::ell: return lognormal_lpdf(v, gp.ell_median, gp.ell_log_sd, d);
    case Hyper::period: return lognormal_lpdf(v, gp.period_median, gp.period_log_sd, d);
  }
  return 0.0;
}

/// Unit-amplitude kernel entry and its derivatives with respect to log ell
/// and log period.
struct KernelEntry {
  double value;
  double dlog_ell;
  double dlog_period;
};

KernelEntry correlation_entry(KernelKind kind, double dist, double ell, double period) {
  if (kind == KernelKind::se) {
    const double q = dist * dist / (ell * ell);
    const double c = std::exp(-0.5 * q);
    return {c, c * q, 0.0};
  }
  const double u = std::numbers::pi * std::fabs(dist) / period;
  const double s = std::sin(u);
  const double c = std::exp(-2.0 * s * s / (ell * ell));
  return {c, c * 4.0 * s * s / (ell * ell), c * 2.0 * u * std::sin(2.0 * u) / (ell * ell)};
}

KernelKind kernel_of(Variant v) { return v == Variant::gp_periodic ? KernelKind::periodic : KernelKind::se; }

/// Lower triangle of A with the diagonal halved.
Eigen::MatrixXd phi(const Eigen::MatrixXd& a) {
  Eigen::MatrixXd out = a.triangularView<Eigen::Lower>();
  out.diagonal() *= 0.5;
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------

std::string_view to_string(Variant v) {
  switch (v) {
    case Variant::normal_default: return "normal-default";
    case Variant::correlated: return "correlated";
    case Variant::binomial: return "binomial";
    case Variant::diff_meta: return "diff-meta";
    case Variant::no_pool_theta: return "no-pool-theta";
    case Variant::no_pool_both: return "no-pool-both";
    case Variant::gp_se: return "gp-se";
    case Variant::gp_periodic: return "gp-periodic";
    case Variant::linear_trend: return "linear-trend";
  }
  return "unknown";
}

std::optional<Variant> parse_variant(std::string_view s) {
  for (int i = 0; i <= static_cast<int>(Variant::linear_trend); ++i) {
    const auto v = static_cast<Variant>(i);
    if (to_string(v) == s) return v;
  }
  return std::nullopt;
}

std::string_view to_string(PriorKind p) {
  switch (p) {
    case PriorKind::uniform: return "uniform";
    case PriorKind::weak: return "weak";
    case PriorKind::automatic: return "auto";
  }
  return "unknown";
}

std::optional<PriorKind> parse_prior(std::string_view s) {
  if (s == "uniform") return PriorKind::uniform;
  if (s == "weak") return PriorKind::weak;
  if (s == "auto") return PriorKind::automatic;
  return std::nullopt;
}

PriorKind resolve_prior(PriorKind p, std::size_t num_studies) {
  if (p != PriorKind::automatic) return p;
  return num_studies < 15 ? PriorKind::weak : PriorKind::uniform;
}

std::string_view hyper_name(Hyper h) {
  static constexpr std::array<std::string_view, kNumHyper> names = {
      "mu_theta", "sigma_theta", "mu_b", "sigma_b", "rho",
      "alpha",    "ell",         "period", "a",     "b_slope"};
  return names[static_cast<int>(h)];
}

// ---------------------------------------------------------------------------

std::string model_spec_to_json(const ModelSpec& m) {
  nlohmann::json j;
  j["schema_version"] = 1;
  j["variant"] = std::string(to_string(m.variant));
  j["prior"] = std::string(to_string(m.prior));
  j["gp"] = {{"alpha_scale", m.gp.alpha_scale},     {"ell_median", m.gp.ell_median},
             {"ell_log_sd", m.gp.ell_log_sd},       {"period_median", m.gp.period_median},
             {"period_log_sd", m.gp.period_log_sd}};
  if (m.fixed_hyper) {
    nlohmann::json h;
    for (int i = 0; i < kNumHyper; ++i) {
      const auto hp = static_cast<Hyper>(i);
      h[std::string(hyper_name(hp))] = field(*m.fixed_hyper, hp);
    }
    j["fixed_hyper"] = h;
  }
  return j.dump(2) + "\n";
}

ModelSpec model_spec_from_json(std::string_view text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ValidationError(std::string("invalid model spec JSON: ") + e.what());
  }
  if (!j.is_object()) throw ValidationError("model spec must be a JSON object");
  if (j.contains("schema_version") && j["schema_version"] != 1)
    throw ValidationError("unsupported model spec schema_version (expected 1)");
  ModelSpec m;
  try {
    if (j.contains("variant")) {
      auto v = parse_variant(j["variant"].get<std::string>());
      if (!v) throw ValidationError("unknown model variant '" + j["variant"].get<std::string>() + "'");
      m.variant = *v;
    }
    if (j.contains("prior")) {
      auto p = parse_prior(j["prior"].get<std::string>());
      if (!p) throw ValidationError("unknown prior '" + j["prior"].get<std::string>() + "'");
      m.prior = *p;
    }
    if (j.contains("gp")) {
      const auto& g = j["gp"];
      m.gp.alpha_scale = g.value("alpha_scale", m.gp.alpha_scale);
      m.gp.ell_median = g.value("ell_median", m.gp.ell_median);
      m.gp.ell_log_sd = g.value("ell_log_sd", m.gp.ell_log_sd);
      m.gp.period_median = g.value("period_median", m.gp.period_median);
      m.gp.period_log_sd = g.value("period_log_sd", m.gp.period_log_sd);
    }
    if (j.contains("fixed_hyper") && !j["fixed_hyper"].is_null()) {
      HyperParams h;
      for (int i = 0; i < kNumHyper; ++i) {
        const auto hp = static_cast<Hyper>(i);
        const std::string key(hyper_name(hp));
        if (j["fixed_hyper"].contains(key)) field(h, hp) = j["fixed_hyper"][key].get<double>();
      }
      m.fixed_hyper = h;
    }
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("malformed model spec: ") + e.what());
  }
  const auto& g = m.gp;
  if (!(g.alpha_scale > 0 && g.ell_median > 0 && g.ell_log_sd > 0 && g.period_median > 0 &&
        g.period_log_sd > 0))
    throw ValidationError("GP prior settings must be positive");
  return m;
}

// ---------------------------------------------------------------------------

ParamLayout::ParamLayout(const ModelSpec& spec, std::size_t num_studies) : J_(num_studies) {
  slot_.fill(-1);
  used_ = hypers_of(spec.variant);
  const auto tm = theta_mode(spec.variant);
  const auto bm = b_mode(spec.variant);
  theta_raw_ = tm != ThetaMode::free;
  b_raw_ = bm == BMode::hier;
  std::size_t pos = 0;
  theta_off_ = 0;
  pos += J_;
  if (bm != BMode::none) {
    b_off_ = static_cast<std::ptrdiff_t>(pos);
    pos += J_;
  }
  if (!spec.fixed_hyper) {
    for (Hyper h : used_) slot_[static_cast<int>(h)] = static_cast<int>(pos++);
  }
  dim_ = pos;
}

std::vector<std::string> ParamLayout::unconstrained_names() const {
  std::vector<std::string> names(dim_);
  for (std::size_t j = 0; j < J_; ++j) {
    const auto idx = std::to_string(j + 1);
    names[theta_off_ + j] = (theta_raw_ ? "raw_theta[" : "theta[") + idx + "]";
    if (b_off_ >= 0) names[b_off_ + j] = (b_raw_ ? "raw_b[" : "b[") + idx + "]";
  }
  for (Hyper h : used_) {
    const int s = slot(h);
    if (s < 0) continue;
    const auto t = transform_of(h);
    const std::string prefix = t == Transform::log ? "log_" : t == Transform::atanh ? "atanh_" : "";
    names[s] = prefix + std::string(hyper_name(h));
  }
  return names;
}

std::vector<std::string> ParamLayout::constrained_names() const {
  std::vector<std::string> names;
  for (Hyper h : used_) {
    if (slot(h) >= 0) names.emplace_back(hyper_name(h));
  }
  for (std::size_t j = 0; j < J_; ++j) names.push_back("theta[" + std::to_string(j + 1) + "]");
  if (b_off_ >= 0) {
    for (std::size_t j = 0; j < J_; ++j) names.push_back("b[" + std::to_string(j + 1) + "]");
  }
  return names;
}

// ---------------------------------------------------------------------------

Eigen::MatrixXd kernel_matrix(KernelKind kind, std::span<const double> x, double alpha, double ell,
                              double period) {
  if (!(alpha > 0) || !(ell > 0) || !(period > 0) || !std::isfinite(alpha) ||
      !std::isfinite(ell) || !std::isfinite(period))
    throw ModelError("kernel parameters must be positive and finite");
  const auto n = static_cast<Eigen::Index>(x.size());
  Eigen::MatrixXd k(n, n);
  const double a2 = alpha * alpha;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (!std::isfinite(x[i])) throw ModelError("kernel inputs must be finite");
    k(i, i) = a2 * (1.0 + kKernelJitter);
    for (Eigen::Index j = 0; j < i; ++j) {
      const double v = a2 * correlation_entry(kind, x[i] - x[j], ell, period).value;
      k(i, j) = v;
      k(j, i) = v;
    }
  }
  return k;
}

// ---------------------------------------------------------------------------

Model::Model(ModelSpec spec, Dataset data)
    : spec_(std::move(spec)),
      data_(std::move(data)),
      prior_(resolve_prior(spec_.prior, data_.size())),
      layout_(spec_, data_.size()) {
  const auto J = data_.size();
  if (spec_.variant == Variant::binomial) {
    if (data_.kind() != DataKind::count)
      throw ValidationError("variant binomial requires count records (n1,N1,n0,N0)");
    for (const auto& c : data_.counts()) {
      n1_.push_back(c.n1);
      N1_.push_back(c.N1);
      n0_.push_back(c.n0);
      N0_.push_back(c.N0);
      auto lchoose = [](double N, double n) {
        return std::lgamma(N + 1) - std::lgamma(n + 1) - std::lgamma(N - n + 1);
      };
      lchoose_.push_back(lchoose(c.N1, c.n1) + lchoose(c.N0, c.n0));
    }
  } else {
    if (data_.kind() != DataKind::summary)
      throw ValidationError("variant " + std::string(to_string(spec_.variant)) +
                            " requires summary records (y1,s1,y0,s0)");
    for (const auto& r : data_.summaries()) {
      y1_.push_back(r.y1);
      s1_.push_back(r.s1);
      y0_.push_back(r.y0);
      s0_.push_back(r.s0);
      sdiff_.push_back(std::sqrt(r.s1 * r.s1 + r.s0 * r.s0));
    }
    const auto tm = theta_mode(spec_.variant);
    if (tm == ThetaMode::gp || tm == ThetaMode::trend) {
      if (!data_.has_covariate())
        throw ValidationError("variant " + std::string(to_string(spec_.variant)) +
                              " requires covariate x on every record");
      x_ = data_.covariates();
    }
  }
  if (spec_.fixed_hyper) {
    const auto& h = *spec_.fixed_hyper;
    for (Hyper hp : layout_.used_hypers()) {
      const double v = field(h, hp);
      if (!std::isfinite(v)) throw ValidationError("fixed hyperparameters must be finite");
      const auto t = transform_of(hp);
      if (t == Transform::log && !(v >= 0.0))
        throw ValidationError("fixed scale " + std::string(hyper_name(hp)) + " must be >= 0");
      if (t == Transform::atanh && !(v > -1.0 && v < 1.0))
        throw ValidationError("fixed rho must lie strictly inside (-1, 1)");
    }
    if (theta_mode(spec_.variant) == ThetaMode::gp && !(h.alpha > 0 && h.ell > 0 && h.period > 0))
      throw ValidationError("fixed GP parameters must be positive");
  }
  (void)J;
}

HyperParams Model::hyper(std::span<const double> params) const {
  if (params.size() != dimension()) throw ModelError("parameter vector has wrong dimension");
  HyperParams h = spec_.fixed_hyper.value_or(HyperParams{});
  for (Hyper hp : layout_.used_hypers()) {
    const int s = layout_.slot(hp);
    if (s >= 0) field(h, hp) = to_constrained(transform_of(hp), params[s]);
  }
  return h;
}

Eigen::MatrixXd Model::gp_correlation_cholesky(double ell, double period, bool& ok) const {
  const auto kind = kernel_of(spec_.variant);
  const auto n = static_cast<Eigen::Index>(x_.size());
  Eigen::MatrixXd c(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    c(i, i) = 1.0 + kKernelJitter;
    for (Eigen::Index j = 0; j < i; ++j) {
      const double v = correlation_entry(kind, x_[i] - x_[j], ell, period).value;
      c(i, j) = v;
      c(j, i) = v;
    }
  }
  Eigen::LLT<Eigen::MatrixXd> llt(c);
  ok = llt.info() == Eigen::Success;
  return llt.matrixL();
}

LatentState Model::latent(std::span<const double> params) const {
  if (params.size() != dimension()) throw ModelError("parameter vector has wrong dimension");
  const auto h = hyper(params);
  const std::size_t J = layout_.num_studies();
  LatentState st;
  const double* pt = params.data() + layout_.theta_offset();
  st.theta.resize(J);
  if (layout_.theta_is_raw()) st.raw_theta.assign(pt, pt + J);
  switch (theta_mode(spec_.variant)) {
    case ThetaMode::free: st.theta.assign(pt, pt + J); break;
    case ThetaMode::hier:
      for (std::size_t j = 0; j < J; ++j) st.theta[j] = h.mu_theta + h.sigma_theta * pt[j];
      break;
    case ThetaMode::trend:
      for (std::size_t j = 0; j < J; ++j)
        st.theta[j] = h.a + h.b_slope * x_[j] + h.sigma_theta * pt[j];
      break;
    case ThetaMode::gp: {
      bool ok = false;
      const auto L = gp_correlation_cholesky(h.ell, h.period, ok);
      if (!ok) throw ModelError("kernel matrix is not positive definite after jitter");
      const Eigen::Map<const Eigen::VectorXd> r(pt, static_cast<Eigen::Index>(J));
      const Eigen::VectorXd f = L * r;
      for (std::size_t j = 0; j < J; ++j) st.theta[j] = h.mu_theta + h.alpha * f[j];
      break;
    }
  }
  if (layout_.has_b()) {
    const double* pb = params.data() + layout_.b_offset();
    st.b.resize(J);
    if (layout_.b_is_raw()) {
      st.raw_b.assign(pb, pb + J);
      if (spec_.variant == Variant::correlated) {
        const double c = std::sqrt(1.0 - h.rho * h.rho);
        for (std::size_t j = 0; j < J; ++j)
          st.b[j] = h.mu_b + h.sigma_b * (h.rho * pt[j] + c * pb[j]);
      } else {
        for (std::size_t j = 0; j < J; ++j) st.b[j] = h.mu_b + h.sigma_b * pb[j];
      }
    } else {
      st.b.assign(pb, pb + J);
    }
  }
  return st;
}

std::vector<double> Model::pack(const HyperParams& hin, std::span<const double> theta,
                                std::span<const double> b) const {
  const std::size_t J = layout_.num_studies();
  if (theta.size() != J || (layout_.has_b() && b.size() != J))
    throw ModelError("effect vectors must have one entry per study");
  const HyperParams h = spec_.fixed_hyper.value_or(hin);
  std::vector<double> p(dimension());
  double* pt = p.data() + layout_.theta_offset();
  switch (theta_mode(spec_.variant)) {
    case ThetaMode::free: std::copy(theta.begin(), theta.end(), pt); break;
    case ThetaMode::hier:
      for (std::size_t j = 0; j < J; ++j) pt[j] = (theta[j] - h.mu_theta) / h.sigma_theta;
      break;
    case ThetaMode::trend:
      for (std::size_t j = 0; j < J; ++j)
        pt[j] = (theta[j] - h.a - h.b_slope * x_[j]) / h.sigma_theta;
      break;
    case ThetaMode::gp: {
      bool ok = false;
      const auto L = gp_correlation_cholesky(h.ell, h.period, ok);
      if (!ok) throw ModelError("kernel matrix is not positive definite after jitter");
      Eigen::VectorXd f(static_cast<Eigen::Index>(J));
      for (std::size_t j = 0; j < J; ++j) f[j] = (theta[j] - h.mu_theta) / h.alpha;
      const Eigen::VectorXd r = L.triangularView<Eigen::Lower>().solve(f);
      for (std::size_t j = 0; j < J; ++j) pt[j] = r[j];
      break;
    }
  }
  if (layout_.has_b()) {
    double* pb = p.data() + layout_.b_offset();
    if (!layout_.b_is_raw()) {
      std::copy(b.begin(), b.end(), pb);
    } else if (spec_.variant == Variant::correlated) {
      const double c = std::sqrt(1.0 - h.rho * h.rho);
      for (std::size_t j = 0; j < J; ++j)
        pb[j] = ((b[j] - h.mu_b) / h.sigma_b - h.rho * pt[j]) / c;
    } else {
      for (std::size_t j = 0; j < J; ++j) pb[j] = (b[j] - h.mu_b) / h.sigma_b;
    }
  }
  for (Hyper hp : layout_.used_hypers()) {
    const int s = layout_.slot(hp);
    if (s >= 0) p[s] = to_unconstrained(transform_of(hp), field(h, hp));
  }
  return p;
}

std::vector<double> Model::constrained(std::span<const double> params) const {
  const auto h = hyper(params);
  const auto st = latent(params);
  std::vector<double> out;
  out.reserve(layout_.used_hypers().size() + 2 * layout_.num_studies());
  for (Hyper hp : layout_.used_hypers()) {
    if (layout_.slot(hp) >= 0) out.push_back(field(h, hp));
  }
  out.insert(out.end(), st.theta.begin(), st.theta.end());
  out.insert(out.end(), st.b.begin(), st.b.end());
  return out;
}

void Model::check_finite(std::span<const double> params) const {
  if (params.size() != dimension())
    throw ModelError("parameter vector has dimension " + std::to_string(params.size()) +
                     ", expected " + std::to_string(dimension()));
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!std::isfinite(params[i]))
      throw ModelError("non-finite parameter at index " + std::to_string(i));
  }
}

double Model::log_posterior(std::span<const double> params) const {
  check_finite(params);
  const double lp = evaluate(params, nullptr);
  if (std::isnan(lp)) throw ModelError("log posterior evaluated to NaN");
  if (lp == kNegInf && theta_mode(spec_.variant) == ThetaMode::gp)
    throw ModelError("kernel matrix is not positive definite after jitter");
  return lp;
}

std::vector<double> Model::gradient(std::span<const double> params) const {
  check_finite(params);
  std::vector<double> g(dimension());
  const double lp = evaluate(params, g.data());
  if (lp == kNegInf && theta_mode(spec_.variant) == ThetaMode::gp)
    throw ModelError("kernel matrix is not positive definite after jitter");
  return g;
}

double Model::log_posterior_gradient(std::span<const double> params, std::span<double> grad) const {
  if (params.size() != dimension() || grad.size() != dimension()) return kNegInf;
  for (double v : params) {
    if (!std::isfinite(v)) return kNegInf;
  }
  const double lp = evaluate(params, grad.data());
  if (!std::isfinite(lp)) return kNegInf;
  return lp;
}

double Model::evaluate(std::span<const double> params, double* grad) const {
  const std::size_t J = layout_.num_studies();
  const auto tm = theta_mode(spec_.variant);
  const auto bm = b_mode(spec_.variant);
  const bool corr = spec_.variant == Variant::correlated;
  const HyperParams h = hyper(params);
  const double* pt = params.data() + layout_.theta_offset();
  const double* pb = layout_.has_b() ? params.data() + layout_.b_offset() : nullptr;
  const double corr_c = corr ? std::sqrt(1.0 - h.rho * h.rho) : 1.0;

  // Effects.
  std::vector<double> theta(J), b(bm == BMode::none ? 0 : J);
  Eigen::MatrixXd L;
  Eigen::VectorXd f;
  switch (tm) {
    case ThetaMode::free: std::copy(pt, pt + J, theta.begin()); break;
    case ThetaMode::hier:
      for (std::size_t j = 0; j < J; ++j) theta[j] = h.mu_theta + h.sigma_theta * pt[j];
      break;
    case ThetaMode::trend:
      for (std::size_t j = 0; j < J; ++j)
        theta[j] = h.a + h.b_slope * x_[j] + h.sigma_theta * pt[j];
      break;
    case ThetaMode::gp: {
      bool ok = false;
      L = gp_correlation_cholesky(h.ell, h.period, ok);
      if (!ok) return kNegInf;
      f = L * Eigen::Map<const Eigen::VectorXd>(pt, static_cast<Eigen::Index>(J));
      for (std::size_t j = 0; j < J; ++j) theta[j] = h.mu_theta + h.alpha * f[j];
      break;
    }
  }
  if (bm == BMode::free) {
    std::copy(pb, pb + J, b.begin());
  } else if (bm == BMode::hier) {
    for (std::size_t j = 0; j < J; ++j)
      b[j] = h.mu_b + h.sigma_b * (corr ? h.rho * pt[j] + corr_c * pb[j] : pb[j]);
  }

  // Likelihood and its gradient with respect to theta and b.
  double lp = 0.0;
  std::vector<double> gt(J, 0.0), gb(b.size(), 0.0);
  switch (likelihood_of(spec_.variant)) {
    case Likelihood::normal_pair:
      for (std::size_t j = 0; j < J; ++j) {
        const double r1 = (y1_[j] - theta[j] - b[j]) / s1_[j];
        const double r0 = (y0_[j] - b[j]) / s0_[j];
        lp += -2.0 * kLogSqrt2Pi - std::log(s1_[j]) - std::log(s0_[j]) - 0.5 * (r1 * r1 + r0 * r0);
        gt[j] = r1 / s1_[j];
        gb[j] = r1 / s1_[j] + r0 / s0_[j];
      }
      break;
    case Likelihood::difference:
      for (std::size_t j = 0; j < J; ++j) {
        const double r = (y1_[j] - y0_[j] - theta[j]) / sdiff_[j];
        lp += -kLogSqrt2Pi - std::log(sdiff_[j]) - 0.5 * r * r;
        gt[j] = r / sdiff_[j];
      }
      break;
    case Likelihood::binomial:
      for (std::size_t j = 0; j < J; ++j) {
        const double eta1 = theta[j] + b[j];
        const double eta0 = b[j];
        lp += lchoose_[j] + n1_[j] * eta1 - N1_[j] * stats::log1p_exp(eta1) + n0_[j] * eta0 -
              N0_[j] * stats::log1p_exp(eta0);
        const double g1 = n1_[j] - N1_[j] * stats::inv_logit(eta1);
        const double g0 = n0_[j] - N0_[j] * stats::inv_logit(eta0);
        gt[j] = g1;
        gb[j] = g1 + g0;
      }
      break;
  }

  // Standard-normal density of the raw coordinates.
  if (layout_.theta_is_raw()) {
    for (std::size_t j = 0; j < J; ++j) lp += -kLogSqrt2Pi - 0.5 * pt[j] * pt[j];
  }
  if (pb && layout_.b_is_raw()) {
    for (std::size_t j = 0; j < J; ++j) lp += -kLogSqrt2Pi - 0.5 * pb[j] * pb[j];
  }

  // Hyperpriors and transform Jacobians.
  std::array<double, kNumHyper> dhyper{};  // d lp / d constrained value
  for (Hyper hp : layout_.used_hypers()) {
    const int s = layout_.slot(hp);
    if (s < 0) continue;
    double d = 0.0;
    lp += hyperprior(hp, field(h, hp), prior_, spec_.gp, grad ? &d : nullptr);
    dhyper[static_cast<int>(hp)] = d;
    double logj = 0.0, dlogj = 0.0;
    transform_jacobian(transform_of(hp), params[s], field(h, hp), logj, dlogj);
    lp += logj;
  }
  if (!grad) return lp;

  // Chain rule back to the unconstrained coordinates.
  std::fill(grad, grad + dimension(), 0.0);
  auto dh = [&](Hyper hp) -> double& { return dhyper[static_cast<int>(hp)]; };
  double* gpt = grad + layout_.theta_offset();
  double* gpb = pb ? grad + layout_.b_offset() : nullptr;

  switch (tm) {
    case ThetaMode::free:
      for (std::size_t j = 0; j < J; ++j) gpt[j] = gt[j];
      break;
    case ThetaMode::hier:
    case ThetaMode::trend:
      for (std::size_t j = 0; j < J; ++j) {
        gpt[j] = gt[j] * h.sigma_theta - pt[j];
        dh(Hyper::sigma_theta) += gt[j] * pt[j];
        if (tm == ThetaMode::hier) {
          dh(Hyper::mu_theta) += gt[j];
        } else {
          dh(Hyper::a) += gt[j];
          dh(Hyper::b_slope) += gt[j] * x_[j];
        }
      }
      break;
    case ThetaMode::gp: {
      const Eigen::Map<const Eigen::VectorXd> g(gt.data(), static_cast<Eigen::Index>(J));
      const Eigen::Map<const Eigen::VectorXd> r(pt, static_cast<Eigen::Index>(J));
      const Eigen::VectorXd u = L.transpose() * g;
      for (std::size_t j = 0; j < J; ++j) {
        gpt[j] = h.alpha * u[j] - pt[j];
        dh(Hyper::mu_theta) += gt[j];
      }
      dh(Hyper::alpha) += g.dot(f);
      // d theta / d log(ell) = alpha * dL * r with dL = L * phi(L^-1 dC L^-T).
      const auto kind = kernel_of(spec_.variant);
      const auto n = static_cast<Eigen::Index>(J);
      Eigen::MatrixXd dc_ell(n, n), dc_per(n, n);
      for (Eigen::Index i = 0; i < n; ++i) {
        dc_ell(i, i) = 0.0;
        dc_per(i, i) = 0.0;
        for (Eigen::Index k = 0; k < i; ++k) {
          const auto e = correlation_entry(kind, x_[i] - x_[k], h.ell, h.period);
          dc_ell(i, k) = dc_ell(k, i) = e.dlog_ell;
          dc_per(i, k) = dc_per(k, i) = e.dlog_period;
        }
      }
      auto directional = [&](const Eigen::MatrixXd& dc) {
        Eigen::MatrixXd a = L.triangularView<Eigen::Lower>().solve(dc);
        a = L.triangularView<Eigen::Lower>().solve(a.transpose()).transpose();
        return h.alpha * u.dot(phi(a) * r);
      };
      if (layout_.slot(Hyper::ell) >= 0) grad[layout_.slot(Hyper::ell)] += directional(dc_ell);
      if (layout_.slot(Hyper::period) >= 0)
        grad[layout_.slot(Hyper::period)] += directional(dc_per);
      break;
    }
  }

  if (bm == BMode::free) {
    for (std::size_t j = 0; j < J; ++j) gpb[j] = gb[j];
  } else if (bm == BMode::hier) {
    for (std::size_t j = 0; j < J; ++j) {
      dh(Hyper::mu_b) += gb[j];
      if (corr) {
        gpt[j] += gb[j] * h.sigma_b * h.rho;
        gpb[j] = gb[j] * h.sigma_b * corr_c - pb[j];
        dh(Hyper::sigma_b) += gb[j] * (h.rho * pt[j] + corr_c * pb[j]);
        dh(Hyper::rho) += gb[j] * h.sigma_b * (pt[j] - h.rho / corr_c * pb[j]);
      } else {
        gpb[j] = gb[j] * h.sigma_b - pb[j];
        dh(Hyper::sigma_b) += gb[j] * pb[j];
      }
    }
  }

  for (Hyper hp : layout_.used_hypers()) {
    const int s = layout_.slot(hp);
    if (s < 0) continue;
    const auto t = transform_of(hp);
    const double v = field(h, hp);
    double logj = 0.0, dlogj = 0.0;
    transform_jacobian(t, params[s], v, logj, dlogj);
    double dvdu = 1.0;
    if (t == Transform::log) dvdu = v;
    if (t == Transform::atanh) dvdu = 1.0 - v * v;
    grad[s] += dh(hp) * dvdu + dlogj;
  }
  return lp;
}

double Model::log_density_constrained(const HyperParams& hin, std::span<const double> theta,
                                      std::span<const double> b) const {
  const std::size_t J = layout_.num_studies();
  const HyperParams h = spec_.fixed_hyper.value_or(hin);
  const auto tm = theta_mode(spec_.variant);
  const auto bm = b_mode(spec_.variant);
  if (theta.size() != J || (bm != BMode::none && b.size() != J))
    throw ModelError("effect vectors must have one entry per study");
  using stats::normal_log_density;
  double lp = 0.0;

  switch (likelihood_of(spec_.variant)) {
    case Likelihood::normal_pair:
      for (std::size_t j = 0; j < J; ++j)
        lp += normal_log_density(y1_[j], theta[j] + b[j], s1_[j]) +
              normal_log_density(y0_[j], b[j], s0_[j]);
      break;
    case Likelihood::difference:
      for (std::size_t j = 0; j < J; ++j)
        lp += normal_log_density(y1_[j] - y0_[j], theta[j], sdiff_[j]);
      break;
    case Likelihood::binomial:
      for (std::size_t j = 0; j < J; ++j) {
        const double p1 = stats::inv_logit(theta[j] + b[j]);
        const double p0 = stats::inv_logit(b[j]);
        lp += lchoose_[j] + n1_[j] * std::log(p1) + (N1_[j] - n1_[j]) * std::log1p(-p1) +
              n0_[j] * std::log(p0) + (N0_[j] - n0_[j]) * std::log1p(-p0);
      }
      break;
  }

  if (spec_.variant == Variant::correlated) {
    // Bivariate normal population density for (theta_j, b_j).
    const double st = h.sigma_theta, sb = h.sigma_b, rho = h.rho;
    const double one_m = 1.0 - rho * rho;
    for (std::size_t j = 0; j < J; ++j) {
      const double zt = (theta[j] - h.mu_theta) / st;
      const double zb = (b[j] - h.mu_b) / sb;
      lp += -2.0 * kLogSqrt2Pi - std::log(st) - std::log(sb) - 0.5 * std::log(one_m) -
            (zt * zt - 2.0 * rho * zt * zb + zb * zb) / (2.0 * one_m);
    }
  } else {
    switch (tm) {
      case ThetaMode::free: break;
      case ThetaMode::hier:
        for (std::size_t j = 0; j < J; ++j)
          lp += normal_log_density(theta[j], h.mu_theta, h.sigma_theta);
        break;
      case ThetaMode::trend:
        for (std::size_t j = 0; j < J; ++j)
          lp += normal_log_density(theta[j], h.a + h.b_slope * x_[j], h.sigma_theta);
        break;
      case ThetaMode::gp: {
        const auto K = kernel_matrix(kernel_of(spec_.variant), x_, h.alpha, h.ell, h.period);
        Eigen::LLT<Eigen::MatrixXd> llt(K);
        if (llt.info() != Eigen::Success)
          throw ModelError("kernel matrix is not positive definite after jitter");
        Eigen::VectorXd d(static_cast<Eigen::Index>(J));
        for (std::size_t j = 0; j < J; ++j) d[j] = theta[j] - h.mu_theta;
        const Eigen::VectorXd z = llt.matrixL().solve(d);
        const Eigen::MatrixXd Lk = llt.matrixL();
        lp += -static_cast<double>(J) * kLogSqrt2Pi - Lk.diagonal().array().log().sum() -
              0.5 * z.squaredNorm();
        break;
      }
    }
    if (bm == BMode::hier) {
      for (std::size_t j = 0; j < J; ++j) lp += normal_log_density(b[j], h.mu_b, h.sigma_b);
    }
  }

  if (!spec_.fixed_hyper) {
    for (Hyper hp : layout_.used_hypers()) lp += hyperprior(hp, field(h, hp), prior_, spec_.gp, nullptr);
  }
  return lp;
}

double Model::log_abs_det_jacobian(std::span<const double> params) const {
  const auto h = hyper(params);
  const double J = static_cast<double>(layout_.num_studies());
  double lj = 0.0;
  switch (theta_mode(spec_.variant)) {
    case ThetaMode::free: break;
    case ThetaMode::hier:
    case ThetaMode::trend: lj += J * std::log(h.sigma_theta); break;
    case ThetaMode::gp: {
      bool ok = false;
      const auto L = gp_correlation_cholesky(h.ell, h.period, ok);
      if (!ok) throw ModelError("kernel matrix is not positive definite after jitter");
      lj += J * std::log(h.alpha) + L.diagonal().array().log().sum();
      break;
    }
  }
  if (layout_.has_b() && layout_.b_is_raw()) {
    lj += J * std::log(h.sigma_b);
    if (spec_.variant == Variant::correlated) lj += 0.5 * J * std::log1p(-h.rho * h.rho);
  }
  for (Hyper hp : layout_.used_hypers()) {
    const int s = layout_.slot(hp);
    if (s < 0) continue;
    double logj = 0.0, dlogj = 0.0;
    transform_jacobian(transform_of(hp), params[s], field(h, hp), logj, dlogj);
    lj += logj;
  }
  return lj;
}

double log_posterior(const ModelSpec& m, const Dataset& d, std::span<const double> params) {
  return Model(m, d).log_posterior(params);
}

std::vector<double> gradient(const ModelSpec& m, const Dataset& d, std::span<const double> params) {
  return Model(m, d).gradient(params);
}

}  // namespace shambayes
