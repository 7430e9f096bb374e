#include "shambayes/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "shambayes/detail/parallel.hpp"

namespace shambayes {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kMaxDeltaH = 1000.0;

using Vec = std::vector<double>;

double log_sum_exp(double a, double b) {
  if (a == -kInf) return b;
  if (b == -kInf) return a;
  const double m = std::max(a, b);
  return m + std::log(std::exp(a - m) + std::exp(b - m));
}

double dot(const Vec& a, const Vec& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

void add_to(Vec& a, const Vec& b) {
  for (std::size_t i = 0; i < a.size(); ++i) a[i] += b[i];
}

Vec sum(const Vec& a, const Vec& b) {
  Vec out = a;
  add_to(out, b);
  return out;
}

struct PhasePoint {
  Vec q, p, grad;
  double lp = -kInf;
};

class StepSizeAdapter {
 public:
  StepSizeAdapter(double delta) : delta_(delta) {}
  void set_mu(double mu) { mu_ = mu; }
  void restart() {
    counter_ = 0;
    s_bar_ = 0.0;
    x_bar_ = 0.0;
  }
  double learn(double accept) {
    ++counter_;
    accept = std::min(1.0, accept);
    const double c = static_cast<double>(counter_);
    const double eta = 1.0 / (c + kT0);
    s_bar_ = (1.0 - eta) * s_bar_ + eta * (delta_ - accept);
    const double x = mu_ - s_bar_ * std::sqrt(c) / kGamma;
    const double x_eta = std::pow(c, -kKappa);
    x_bar_ = (1.0 - x_eta) * x_bar_ + x_eta * x;
    return std::exp(x);
  }
  double final_step() const { return std::exp(x_bar_); }

 private:
  static constexpr double kGamma = 0.05;
  static constexpr double kT0 = 10.0;
  static constexpr double kKappa = 0.75;
  double delta_;
  double mu_ = 0.0;
  long counter_ = 0;
  double s_bar_ = 0.0;
  double x_bar_ = 0.0;
};

/// Welford accumulator for per-coordinate variances.
class VarianceEstimator {
 public:
  explicit VarianceEstimator(std::size_t n) : mean_(n, 0.0), m2_(n, 0.0) {}
  void restart() {
    count_ = 0;
    std::fill(mean_.begin(), mean_.end(), 0.0);
    std::fill(m2_.begin(), m2_.end(), 0.0);
  }
  void add(const Vec& q) {
    ++count_;
    for (std::size_t i = 0; i < q.size(); ++i) {
      const double d = q[i] - mean_[i];
      mean_[i] += d / static_cast<double>(count_);
      m2_[i] += d * (q[i] - mean_[i]);
    }
  }
  std::size_t count() const { return count_; }
  Vec variance() const {
    Vec v(m2_.size());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = m2_[i] / (static_cast<double>(count_) - 1.0);
    return v;
  }

 private:
  std::size_t count_ = 0;
  Vec mean_, m2_;
};

/// Warmup schedule: an initial fast interval, doubling slow windows for the
/// metric, and a terminal fast interval.
class WindowSchedule {
 public:
  explicit WindowSchedule(long warmup) : warmup_(warmup) {
    if (warmup < 20) {
      adapt_metric_ = false;
      return;
    }
    if (init_buffer_ + base_window_ + term_buffer_ > warmup) {
      init_buffer_ = static_cast<long>(0.15 * warmup);
      term_buffer_ = static_cast<long>(0.1 * warmup);
      base_window_ = warmup - (init_buffer_ + term_buffer_);
    }
    window_size_ = base_window_;
    next_window_ = init_buffer_ + window_size_ - 1;
  }

  bool in_window() const {
    return adapt_metric_ && counter_ >= init_buffer_ && counter_ < warmup_ - term_buffer_ &&
           counter_ != warmup_;
  }
  bool end_of_window() const {
    return adapt_metric_ && counter_ == next_window_ && counter_ != warmup_;
  }
  void advance() { ++counter_; }
  void compute_next_window() {
    if (next_window_ == warmup_ - term_buffer_ - 1) return;
    window_size_ *= 2;
    next_window_ = counter_ + window_size_;
    if (next_window_ != warmup_ - term_buffer_ - 1) {
      const long boundary = next_window_ + 2 * window_size_;
      if (boundary >= warmup_ - term_buffer_) next_window_ = warmup_ - term_buffer_ - 1;
    }
  }

 private:
  long warmup_;
  bool adapt_metric_ = true;
  long init_buffer_ = 75;
  long term_buffer_ = 50;
  long base_window_ = 25;
  long counter_ = 0;
  long window_size_ = 0;
  long next_window_ = 0;
};

class Nuts {
 public:
  Nuts(const Model& model, Rng& rng, int max_depth)
      : model_(model), rng_(rng), max_depth_(max_depth), inv_metric_(model.dimension(), 1.0) {}

  double step_size = 1.0;

  Vec& inv_metric() { return inv_metric_; }

  bool evaluate(PhasePoint& z) const {
    z.lp = model_.log_posterior_gradient(z.q, z.grad);
    if (!std::isfinite(z.lp)) return false;
    for (double g : z.grad) {
      if (!std::isfinite(g)) {
        z.lp = -kInf;
        return false;
      }
    }
    return true;
  }

  void sample_momentum(PhasePoint& z) {
    for (std::size_t i = 0; i < z.p.size(); ++i) z.p[i] = std_normal(rng_) / std::sqrt(inv_metric_[i]);
  }

  double hamiltonian(const PhasePoint& z) const {
    if (!std::isfinite(z.lp)) return kInf;
    double k = 0.0;
    for (std::size_t i = 0; i < z.p.size(); ++i) k += z.p[i] * z.p[i] * inv_metric_[i];
    return -z.lp + 0.5 * k;
  }

  Vec p_sharp(const PhasePoint& z) const {
    Vec v(z.p.size());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = z.p[i] * inv_metric_[i];
    return v;
  }

  void leapfrog(PhasePoint& z, double eps) const {
    for (std::size_t i = 0; i < z.p.size(); ++i) z.p[i] += 0.5 * eps * z.grad[i];
    for (std::size_t i = 0; i < z.q.size(); ++i) z.q[i] += eps * inv_metric_[i] * z.p[i];
    if (!evaluate(z)) return;
    for (std::size_t i = 0; i < z.p.size(); ++i) z.p[i] += 0.5 * eps * z.grad[i];
  }

  /// Doubles or halves the step size until one leapfrog step crosses an
  /// acceptance probability of 0.8.
  void init_step_size(PhasePoint& z) {
    const PhasePoint start = z;
    sample_momentum(z);
    double h0 = hamiltonian(z);
    leapfrog(z, step_size);
    double h = hamiltonian(z);
    if (std::isnan(h)) h = kInf;
    const double log08 = std::log(0.8);
    const int direction = (h0 - h) > log08 ? 1 : -1;
    for (int iter = 0; iter < 200; ++iter) {
      z = start;
      sample_momentum(z);
      h0 = hamiltonian(z);
      leapfrog(z, step_size);
      h = hamiltonian(z);
      if (std::isnan(h)) h = kInf;
      const double dh = h0 - h;
      if (direction == 1 && !(dh > log08)) break;
      if (direction == -1 && !(dh < log08)) break;
      step_size = direction == 1 ? 2.0 * step_size : 0.5 * step_size;
      if (step_size > 1e7 || step_size == 0.0) break;
    }
    step_size = std::clamp(step_size, 1e-12, 1e7);
    z = start;
  }

  struct Transition {
    double accept = 0.0;
    bool divergent = false;
    long n_leapfrog = 0;
  };

  Transition transition(PhasePoint& z0) {
    PhasePoint z = z0;
    sample_momentum(z);
    PhasePoint z_fwd = z, z_bck = z, z_sample = z, z_propose = z;

    Vec p_fwd_fwd = z.p, p_fwd_bck = z.p, p_bck_fwd = z.p, p_bck_bck = z.p;
    Vec ps_fwd_fwd = p_sharp(z), ps_fwd_bck = ps_fwd_fwd, ps_bck_fwd = ps_fwd_fwd,
        ps_bck_bck = ps_fwd_fwd;
    Vec rho = z.p;
    double log_sum_weight = 0.0;
    const double h0 = hamiltonian(z);
    state_ = {};
    int depth = 0;
    const std::size_t n = z.q.size();

    while (depth < max_depth_) {
      Vec rho_fwd(n, 0.0), rho_bck(n, 0.0);
      bool valid = false;
      double lsw_subtree = -kInf;
      if (uniform01(rng_) > 0.5) {
        rho_bck = rho;
        p_bck_fwd = p_fwd_bck;
        ps_bck_fwd = ps_fwd_bck;
        z = z_fwd;
        valid = build_tree(depth, z, z_propose, ps_fwd_bck, ps_fwd_fwd, rho_fwd, p_fwd_bck, p_fwd_fwd,
                           h0, 1.0, lsw_subtree);
        z_fwd = z;
      } else {
        rho_fwd = rho;
        p_fwd_bck = p_bck_fwd;
        ps_fwd_bck = ps_bck_fwd;
        z = z_bck;
        valid = build_tree(depth, z, z_propose, ps_bck_fwd, ps_bck_bck, rho_bck, p_bck_fwd, p_bck_bck,
                           h0, -1.0, lsw_subtree);
        z_bck = z;
      }
      if (!valid) break;
      ++depth;
      if (lsw_subtree > log_sum_weight) {
        z_sample = z_propose;
      } else if (uniform01(rng_) < std::exp(lsw_subtree - log_sum_weight)) {
        z_sample = z_propose;
      }
      log_sum_weight = log_sum_exp(log_sum_weight, lsw_subtree);
      rho = sum(rho_bck, rho_fwd);
      bool persist = criterion(ps_bck_bck, ps_fwd_fwd, rho);
      persist = persist && criterion(ps_bck_bck, ps_fwd_bck, sum(rho_bck, p_fwd_bck));
      persist = persist && criterion(ps_bck_fwd, ps_fwd_fwd, sum(rho_fwd, p_bck_fwd));
      if (!persist) break;
    }
    z0 = z_sample;
    Transition t;
    t.n_leapfrog = state_.n_leapfrog;
    t.divergent = state_.divergent;
    t.accept = state_.n_leapfrog > 0 ? state_.sum_metro / static_cast<double>(state_.n_leapfrog) : 0.0;
    return t;
  }

 private:
  static bool criterion(const Vec& ps_minus, const Vec& ps_plus, const Vec& rho) {
    return dot(ps_plus, rho) > 0.0 && dot(ps_minus, rho) > 0.0;
  }

  bool build_tree(int depth, PhasePoint& z, PhasePoint& z_propose, Vec& ps_beg, Vec& ps_end,
                  Vec& rho, Vec& p_beg, Vec& p_end, double h0, double sign, double& log_sum_weight) {
    if (depth == 0) {
      leapfrog(z, sign * step_size);
      ++state_.n_leapfrog;
      double h = hamiltonian(z);
      if (std::isnan(h)) h = kInf;
      if (h - h0 > kMaxDeltaH) state_.divergent = true;
      log_sum_weight = log_sum_exp(log_sum_weight, h0 - h);
      state_.sum_metro += h0 - h > 0.0 ? 1.0 : std::exp(h0 - h);
      z_propose = z;
      ps_beg = p_sharp(z);
      ps_end = ps_beg;
      add_to(rho, z.p);
      p_beg = z.p;
      p_end = z.p;
      return !state_.divergent;
    }
    const std::size_t n = z.q.size();
    Vec p_init_end(n), ps_init_end(n), rho_init(n, 0.0);
    double lsw_init = -kInf;
    if (!build_tree(depth - 1, z, z_propose, ps_beg, ps_init_end, rho_init, p_beg, p_init_end, h0, sign,
                    lsw_init))
      return false;

    PhasePoint z_propose_final = z;
    Vec p_final_beg(n), ps_final_beg(n), rho_final(n, 0.0);
    double lsw_final = -kInf;
    if (!build_tree(depth - 1, z, z_propose_final, ps_final_beg, ps_end, rho_final, p_final_beg, p_end,
                    h0, sign, lsw_final))
      return false;

    const double lsw_subtree = log_sum_exp(lsw_init, lsw_final);
    log_sum_weight = log_sum_exp(log_sum_weight, lsw_subtree);
    if (lsw_final > lsw_subtree) {
      z_propose = z_propose_final;
    } else if (uniform01(rng_) < std::exp(lsw_final - lsw_subtree)) {
      z_propose = z_propose_final;
    }
    const Vec rho_subtree = sum(rho_init, rho_final);
    add_to(rho, rho_subtree);
    bool persist = criterion(ps_beg, ps_end, rho_subtree);
    persist = persist && criterion(ps_beg, ps_final_beg, sum(rho_init, p_final_beg));
    persist = persist && criterion(ps_init_end, ps_end, sum(rho_final, p_init_end));
    return persist;
  }

  struct TreeState {
    long n_leapfrog = 0;
    double sum_metro = 0.0;
    bool divergent = false;
  };

  const Model& model_;
  Rng& rng_;
  int max_depth_;
  Vec inv_metric_;
  TreeState state_;
};

int max_depth_for(int max_leapfrog) {
  int depth = 0;
  while ((2L << depth) <= max_leapfrog) ++depth;
  return std::max(depth, 1);
}

struct ChainOutput {
  std::vector<double> values;
  std::vector<std::uint8_t> divergent;
  ChainInfo info;
};

PhasePoint initialize(const Model& model, Rng& rng, std::size_t& attempts) {
  const auto& layout = model.layout();
  const std::size_t dim = model.dimension();
  PhasePoint z;
  z.q.assign(dim, 0.0);
  z.p.assign(dim, 0.0);
  z.grad.assign(dim, 0.0);
  std::vector<bool> is_hyper(dim, false);
  for (int h = 0; h < kNumHyper; ++h) {
    const int s = layout.slot(static_cast<Hyper>(h));
    if (s >= 0) is_hyper[s] = true;
  }
  for (attempts = 1; attempts <= 100; ++attempts) {
    for (std::size_t i = 0; i < dim; ++i)
      z.q[i] = is_hyper[i] ? std::uniform_real_distribution<double>(-1.0, 1.0)(rng)
                           : 0.1 * std_normal(rng);
    z.lp = model.log_posterior_gradient(z.q, z.grad);
    bool ok = std::isfinite(z.lp);
    for (double g : z.grad) ok = ok && std::isfinite(g);
    if (ok) return z;
  }
  throw ModelError("could not find a finite log density at initialization after 100 attempts");
}

ChainOutput run_chain(const Model& model, const SamplerConfig& cfg, std::size_t chain) {
  Rng rng(derive_seed(cfg.seed, {static_cast<std::uint64_t>(chain)}));
  ChainOutput out;
  PhasePoint z = initialize(model, rng, out.info.init_attempts);
  Nuts nuts(model, rng, max_depth_for(cfg.max_leapfrog));
  nuts.init_step_size(z);

  StepSizeAdapter stepper(cfg.target_accept);
  stepper.set_mu(std::log(10.0 * nuts.step_size));
  stepper.restart();
  WindowSchedule schedule(cfg.warmup);
  VarianceEstimator estimator(model.dimension());

  for (int it = 0; it < cfg.warmup; ++it) {
    const auto t = nuts.transition(z);
    nuts.step_size = stepper.learn(t.accept);
    bool update = false;
    if (schedule.in_window()) estimator.add(z.q);
    if (schedule.end_of_window()) {
      schedule.compute_next_window();
      Vec var = estimator.variance();
      const double n = static_cast<double>(estimator.count());
      for (double& v : var) v = (n / (n + 5.0)) * v + 1e-3 * (5.0 / (n + 5.0));
      nuts.inv_metric() = var;
      estimator.restart();
      update = true;
    }
    schedule.advance();
    if (update) {
      nuts.init_step_size(z);
      stepper.set_mu(std::log(10.0 * nuts.step_size));
      stepper.restart();
    }
  }
  if (cfg.warmup > 0) nuts.step_size = stepper.final_step();

  const std::size_t np = model.layout().constrained_names().size();
  out.values.reserve(static_cast<std::size_t>(cfg.draws) * np);
  out.divergent.reserve(cfg.draws);
  double accept_sum = 0.0, leapfrog_sum = 0.0;
  for (int it = 0; it < cfg.draws; ++it) {
    const auto t = nuts.transition(z);
    accept_sum += t.accept;
    leapfrog_sum += static_cast<double>(t.n_leapfrog);
    out.divergent.push_back(t.divergent ? 1 : 0);
    const auto c = model.constrained(z.q);
    out.values.insert(out.values.end(), c.begin(), c.end());
  }
  out.info.step_size = nuts.step_size;
  out.info.mean_accept = cfg.draws > 0 ? accept_sum / cfg.draws : 0.0;
  out.info.mean_leapfrog = cfg.draws > 0 ? leapfrog_sum / cfg.draws : 0.0;
  out.info.inv_metric = nuts.inv_metric();
  return out;
}

}  // namespace

void validate(const SamplerConfig& c) {
  if (c.chains < 1) throw ValidationError("chains must be positive");
  if (c.warmup < 1) throw ValidationError("warmup must be positive");
  if (c.draws < 1) throw ValidationError("draws must be positive");
  if (c.max_leapfrog < 1) throw ValidationError("max leapfrog steps must be positive");
  if (!(c.target_accept > 0.0 && c.target_accept < 1.0))
    throw ValidationError("target acceptance must lie strictly inside (0, 1)");
}

FitResult fit(const Model& model, const SamplerConfig& config,
              const std::vector<TransformRequest>& transforms) {
  validate(config);
  const std::size_t chains = static_cast<std::size_t>(config.chains);
  std::vector<ChainOutput> outputs(chains);
  detail::parallel_for(chains, config.threads,
                       [&](std::size_t c) { outputs[c] = run_chain(model, config, c); });

  FitResult r;
  r.draws.names = model.layout().constrained_names();
  r.draws.chains = chains;
  r.draws.draws = static_cast<std::size_t>(config.draws);
  for (auto& o : outputs) {
    r.draws.values.insert(r.draws.values.end(), o.values.begin(), o.values.end());
    r.draws.divergent.insert(r.draws.divergent.end(), o.divergent.begin(), o.divergent.end());
    r.chain_info.push_back(std::move(o.info));
  }
  std::vector<std::string> ids;
  for (std::size_t j = 0; j < model.data().size(); ++j) ids.push_back(model.data().id(j));
  r.summary = summarize(r.draws, transforms, ids);
  return r;
}

FitResult fit(const ModelSpec& spec, const Dataset& data, const SamplerConfig& config,
              const std::vector<TransformRequest>& transforms) {
  validate(config);
  return fit(Model(spec, data), config, transforms);
}

}  // namespace shambayes
