#include "cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <limits>
#include <ostream>
#include <set>

#include "shambayes/classical.hpp"
#include "shambayes/detail/text.hpp"
#include "shambayes/linear_adjust.hpp"
#include "shambayes/model.hpp"
#include "shambayes/report.hpp"
#include "shambayes/sampler.hpp"
#include "shambayes/sim.hpp"
#include "shambayes/study_data.hpp"

namespace shambayes::cli {

namespace fs = std::filesystem;

namespace {

struct Globals {
  std::uint64_t seed = kDefaultSeed;
  std::size_t threads = 0;
  std::string out_dir = ".";
  std::vector<std::string> formats = {"csv", "json", "svg"};
};

struct Output {
  fs::path dir;
  std::set<std::string> formats;
  std::ostream& log;

  bool wants(const std::string& f) const { return formats.count(f) > 0; }
  void write(const std::string& name, const std::string& content) const {
    const fs::path p = dir / name;
    detail::write_file(p, content);
    log << "wrote " << p.string() << "\n";
  }
};

double parse_number_flag(const std::string& s, const char* flag) {
  const auto v = detail::parse_double(detail::trim(s));
  if (!v) throw ValidationError(std::string(flag) + ": cannot parse '" + s + "' as a number");
  return *v;
}

std::vector<double> parse_list(const std::string& s, const char* flag) {
  std::vector<double> out;
  for (auto f : detail::split(s, ',')) out.push_back(parse_number_flag(std::string(f), flag));
  return out;
}

Dataset load(const std::string& path, const std::string& format) {
  if (!fs::exists(path)) throw ValidationError("input file '" + path + "' does not exist");
  if (format.empty() || format == "auto") return ingest(path);
  const auto f = parse_file_format(format);
  if (!f) throw ValidationError("unknown input format '" + format + "'");
  return ingest(path, *f);
}

LogOddsConvention parse_convention(const std::string& s) {
  if (s == "paper") return LogOddsConvention::paper;
  if (s == "haldane-anscombe") return LogOddsConvention::haldane_anscombe;
  throw ValidationError("unknown log-odds convention '" + s + "'");
}

/// Count data become log-odds summaries for everything except the binomial model.
Dataset as_summaries(const Dataset& d, const std::string& convention) {
  if (d.kind() == DataKind::summary) return d;
  return log_odds_transform(d, parse_convention(convention));
}

std::vector<double> plot_x(const Dataset& d) { return d.has_covariate() ? d.covariates() : std::vector<double>{}; }

// ---------------------------------------------------------------------------

struct EstimateArgs {
  std::string input, input_format = "auto", convention = "paper", reference = "normal";
  std::string rescale;
};

int cmd_estimate(const EstimateArgs& a, const Output& o) {
  Dataset d = as_summaries(load(a.input, a.input_format), a.convention);
  if (!a.rescale.empty()) d = rescale_sham_ses(d, parse_number_flag(a.rescale, "--rescale-sham-se"));
  Reference ref;
  if (a.reference == "normal") {
    ref = Reference::normal;
  } else if (a.reference == "t") {
    ref = Reference::t;
  } else {
    throw ValidationError("--reference must be normal or t");
  }
  const auto x = plot_x(d);
  for (const auto& e : {exposed_only(d), difference(d)}) {
    const std::string stem(to_string(e.method));
    const auto sig = classify_significance(e, ref, d);
    if (o.wants("csv")) {
      o.write(stem + ".csv", estimates_csv(e));
      o.write(stem + "_significance.csv", significance_csv(sig));
    }
    if (o.wants("json")) {
      o.write(stem + ".json", estimates_json(e));
      o.write(stem + "_significance.json", significance_json(sig));
    }
    if (o.wants("svg")) o.write(stem + ".svg", estimates_svg(e, sig, x));
  }
  return kOk;
}

// ---------------------------------------------------------------------------

struct SamplerArgs {
  int chains = 4, warmup = 1000, draws = 1000, max_leapfrog = 1024;
  double target_accept = 0.8;
};

void add_sampler_flags(CLI::App* c, SamplerArgs& s, const std::string& prefix = "") {
  c->add_option("--" + prefix + "chains", s.chains, "Number of chains")->capture_default_str();
  c->add_option("--" + prefix + "warmup", s.warmup, "Warmup iterations per chain")->capture_default_str();
  c->add_option("--" + prefix + "draws", s.draws, "Retained draws per chain")->capture_default_str();
  c->add_option("--" + prefix + "target-accept", s.target_accept, "Target acceptance rate")->capture_default_str();
  c->add_option("--" + prefix + "max-leapfrog", s.max_leapfrog, "Leapfrog step cap per iteration")
      ->capture_default_str();
}

SamplerConfig sampler_config(const SamplerArgs& s, const Globals& g) {
  SamplerConfig c;
  c.chains = s.chains;
  c.warmup = s.warmup;
  c.draws = s.draws;
  c.target_accept = s.target_accept;
  c.max_leapfrog = s.max_leapfrog;
  c.seed = g.seed;
  c.threads = g.threads;
  validate(c);
  return c;
}

struct ModelArgs {
  std::string model_file, variant, prior;
};

void add_model_flags(CLI::App* c, ModelArgs& m) {
  c->add_option("--model", m.model_file, "Model spec JSON file");
  c->add_option("--variant", m.variant, "Model variant (overrides the spec file)");
  c->add_option("--prior", m.prior, "Hyperprior: uniform, weak or auto (overrides the spec file)");
}

ModelSpec model_spec(const ModelArgs& m) {
  ModelSpec spec;
  if (!m.model_file.empty()) {
    if (!fs::exists(m.model_file)) throw ValidationError("model file '" + m.model_file + "' does not exist");
    spec = model_spec_from_json(detail::read_file(m.model_file));
  }
  if (!m.variant.empty()) {
    const auto v = parse_variant(m.variant);
    if (!v) throw ValidationError("unknown variant '" + m.variant + "'");
    spec.variant = *v;
  }
  if (!m.prior.empty()) {
    const auto p = parse_prior(m.prior);
    if (!p) throw ValidationError("unknown prior '" + m.prior + "'");
    spec.prior = *p;
  }
  return spec;
}

struct FitArgs {
  std::string input, input_format = "auto", convention = "paper";
  ModelArgs model;
  SamplerArgs sampler;
  std::vector<std::string> transforms;
};

std::vector<TransformRequest> parse_transforms(const std::vector<std::string>& items) {
  std::vector<TransformRequest> out;
  for (const auto& t : items) {
    const auto colon = t.find(':');
    if (colon == std::string::npos) throw ValidationError("--transform expects kind:param, got '" + t + "'");
    const auto k = parse_transform(t.substr(0, colon));
    if (!k) throw ValidationError("unknown transform '" + t.substr(0, colon) + "'");
    out.push_back({t.substr(colon + 1), *k});
  }
  return out;
}

int cmd_fit(const FitArgs& a, const Globals& g, const Output& o) {
  const ModelSpec spec = model_spec(a.model);
  Dataset d = load(a.input, a.input_format);
  if (spec.variant != Variant::binomial) d = as_summaries(d, a.convention);
  const SamplerConfig sc = sampler_config(a.sampler, g);
  const auto transforms = parse_transforms(a.transforms);

  const FitResult r = fit(spec, d, sc, transforms);
  if (o.wants("json")) o.write("fit.json", fit_summary_json(r.summary, &spec, &sc));
  if (o.wants("csv")) o.write("draws.csv", draws_csv(r.draws));
  if (o.wants("svg")) {
    const Dataset sd = as_summaries(d, a.convention);
    o.write("shrinkage.svg", shrinkage_svg(r.summary, exposed_only(sd), plot_x(sd)));
  }
  for (const auto& w : r.summary.warnings) o.log << "warning: " << w << "\n";
  if (!r.summary.converged) {
    o.log << "fit did not meet the convergence thresholds\n";
    return kNotConverged;
  }
  return kOk;
}

// ---------------------------------------------------------------------------

struct AdjustArgs {
  std::string input, input_format = "auto", convention = "paper";
  std::string mu_b, sigma_b, from_fit;
};

int cmd_adjust(const AdjustArgs& a, const Output& o) {
  const Dataset d = as_summaries(load(a.input, a.input_format), a.convention);
  double mu_b = 0.0, sigma_b = 0.0;
  if (!a.from_fit.empty()) {
    if (!a.mu_b.empty() || !a.sigma_b.empty())
      throw ValidationError("--from-fit cannot be combined with --mu-b or --sigma-b");
    if (!fs::exists(a.from_fit)) throw ValidationError("fit file '" + a.from_fit + "' does not exist");
    const FitSummary s = parse_fit_summary_json(detail::read_file(a.from_fit));
    const auto* m = s.find("mu_b");
    const auto* sd = s.find("sigma_b");
    if (!m || !sd) throw ValidationError("fit summary has no mu_b and sigma_b posterior means");
    mu_b = m->mean;
    sigma_b = sd->mean;
  } else {
    if (a.mu_b.empty() || a.sigma_b.empty())
      throw ValidationError("adjust needs --mu-b and --sigma-b, or --from-fit");
    mu_b = parse_number_flag(a.mu_b, "--mu-b");
    sigma_b = parse_number_flag(a.sigma_b, "--sigma-b");
  }
  const AdjustmentResult r = linear_adjust(d, mu_b, sigma_b);
  if (o.wants("csv")) {
    o.write("linear-adjust.csv", estimates_csv(r.as_estimates()));
    o.write("adjustment.csv", adjustment_csv(r));
  }
  if (o.wants("json")) o.write("adjustment.json", adjustment_json(r));
  if (o.wants("svg")) {
    const auto e = r.as_estimates();
    o.write("linear-adjust.svg", estimates_svg(e, classify_significance(e), plot_x(d)));
  }
  return kOk;
}

// ---------------------------------------------------------------------------

struct SimulateArgs {
  std::string input, input_format = "auto", convention = "paper";
  std::string theta_source = "raw", draws_file, from_fit, noise = "normal";
  std::string grid = "0,0.02,0.04,0.06,0.08,0.1";
  std::string sizes;
  std::string estimators = "exposed-only,difference,bayes";
  int replicates = 200;
  double sigma_y = 0.04, mu_b = 0.0;
  ModelArgs model;
  SamplerArgs sampler{2, 500, 500, 1024, 0.8};
};

int cmd_simulate(const SimulateArgs& a, const Globals& g, const Output& o) {
  SimConfig cfg;
  const auto src = parse_theta_source(a.theta_source);
  if (!src) throw ValidationError("unknown theta source '" + a.theta_source + "'");
  cfg.theta_source = *src;
  const auto noise = parse_noise(a.noise);
  if (!noise) throw ValidationError("unknown noise '" + a.noise + "'");
  cfg.noise = *noise;
  cfg.sigma_b_grid = parse_list(a.grid, "--grid");
  cfg.replicates = a.replicates;
  cfg.sigma_y = a.sigma_y;
  cfg.mu_b = a.mu_b;
  cfg.seed = g.seed;
  cfg.threads = g.threads;

  cfg.estimators.clear();
  for (auto e : detail::split(a.estimators, ',')) {
    const auto m = parse_method(detail::trim(e));
    if (!m) throw ValidationError("unknown estimator '" + std::string(e) + "'");
    cfg.estimators.push_back(*m);
  }
  cfg.bayes_model = model_spec(a.model);
  Globals inner = g;
  inner.threads = 1;  // replicates already run in parallel
  cfg.bayes_sampler = sampler_config(a.sampler, inner);

  std::optional<Dataset> data;
  if (!a.input.empty()) data = as_summaries(load(a.input, a.input_format), a.convention);
  if (data) {
    for (const auto& r : data->summaries()) {
      cfg.observed_y1.push_back(r.y1);
      if (r.n1 && r.n0) {
        cfg.n1.push_back(*r.n1);
        cfg.n0.push_back(*r.n0);
      }
    }
    if (cfg.n1.size() != data->size()) {
      cfg.n1.clear();
      cfg.n0.clear();
    }
    if (data->has_covariate()) cfg.x = data->covariates();
  }
  switch (cfg.theta_source) {
    case ThetaSource::raw_observed:
      if (!data) throw ValidationError("--theta-source raw needs an input dataset");
      break;
    case ThetaSource::posterior_draws:
      if (a.draws_file.empty()) throw ValidationError("--theta-source draws needs --draws-file");
      if (!fs::exists(a.draws_file)) throw ValidationError("draws file '" + a.draws_file + "' does not exist");
      cfg.theta_draws = theta_rows(parse_draws_csv(detail::read_file(a.draws_file)));
      break;
    case ThetaSource::fixed_vector: {
      if (a.from_fit.empty()) throw ValidationError("--theta-source fixed needs --from-fit");
      if (!fs::exists(a.from_fit)) throw ValidationError("fit file '" + a.from_fit + "' does not exist");
      const FitSummary s = parse_fit_summary_json(detail::read_file(a.from_fit));
      for (const auto& st : s.studies) cfg.theta_fixed.push_back(st.theta_mean);
      break;
    }
  }
  const std::size_t J = available_studies(cfg);
  // Side information only makes sense when it lines up with the theta source.
  if (cfg.x.size() != J) cfg.x.clear();
  if (cfg.n1.size() != J) {
    cfg.n1.clear();
    cfg.n0.clear();
  }

  std::vector<std::optional<std::size_t>> sizes;
  if (a.sizes.empty()) {
    sizes.push_back(std::nullopt);
  } else {
    for (double m : parse_list(a.sizes, "--sizes")) {
      if (!(m >= 1.0) || m != std::floor(m)) throw ValidationError("--sizes must be positive integers");
      sizes.push_back(static_cast<std::size_t>(m));
    }
  }
  for (const auto& m : sizes) {
    cfg.size = m;
    validate(cfg);
  }
  for (const auto& m : sizes) {
    cfg.size = m;
    const std::size_t M = m.value_or(J);
    const MetricsGrid grid = run_grid(cfg);
    const std::string stem = "metrics_M" + std::to_string(M);
    if (o.wants("csv")) o.write(stem + ".csv", metrics_grid_csv(grid));
    if (o.wants("svg")) o.write(stem + ".svg", metrics_grid_svg(grid, "M = " + std::to_string(M) + " studies"));
  }
  return kOk;
}

// ---------------------------------------------------------------------------

struct DiagnoseArgs {
  std::string input, input_format = "auto", convention = "paper";
};

int cmd_diagnose(const DiagnoseArgs& a, const Output& o) {
  const Dataset d = as_summaries(load(a.input, a.input_format), a.convention);
  const ChiSquareResult c = sham_chi_square(d);
  if (o.wants("json")) o.write("chi_square.json", chi_square_json(c, d.size()));
  if (o.wants("csv")) o.write("sham_scatter.csv", write_summary_csv(d));
  if (o.wants("svg")) o.write("sham_scatter.svg", sham_scatter_svg(d));
  o.log << "chi-square " << detail::format_double(c.stat) << " on " << c.df << " df, cdf "
        << detail::format_double(c.cdf) << "\n";
  return kOk;
}

void add_input(CLI::App* c, std::string& input, std::string& format, std::string& convention, bool required = true) {
  auto* opt = c->add_option("input", input, "Dataset file (summary CSV, count CSV or JSON)");
  if (required) opt->required();
  c->add_option("--input-format", format, "summary_csv, count_csv, json or auto")->capture_default_str();
  c->add_option("--log-odds", convention, "Count-data convention: paper or haldane-anscombe")
      ->capture_default_str();
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Hierarchical sham-controlled meta-analysis"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--seed", g.seed, "Seed for every random stream")->capture_default_str();
  app.add_option("--threads", g.threads, "Worker cap (0 = all hardware threads)")->capture_default_str();
  app.add_option("--out-dir", g.out_dir, "Output directory")->capture_default_str();
  app.add_option("--format", g.formats, "Output formats: csv, json, svg")
      ->delimiter(',')
      ->check(CLI::IsMember({"csv", "json", "svg"}));
  app.fallthrough();

  EstimateArgs ea;
  auto* est = app.add_subcommand("estimate", "Exposed-only and difference estimates with significance bands");
  add_input(est, ea.input, ea.input_format, ea.convention);
  est->add_option("--rescale-sham-se", ea.rescale, "Multiply every sham standard error by this factor");
  est->add_option("--reference", ea.reference, "Reference distribution: normal or t")->capture_default_str();

  FitArgs fa;
  auto* fit_cmd = app.add_subcommand("fit", "Fit a hierarchical model by NUTS");
  add_input(fit_cmd, fa.input, fa.input_format, fa.convention);
  add_model_flags(fit_cmd, fa.model);
  add_sampler_flags(fit_cmd, fa.sampler);
  fit_cmd->add_option("--transform", fa.transforms, "Extra summary, e.g. exp:mu_theta or inv_logit:mu_theta");

  AdjustArgs aa;
  auto* adj = app.add_subcommand("adjust", "Linear sham adjustment for given (mu_b, sigma_b)");
  add_input(adj, aa.input, aa.input_format, aa.convention);
  adj->add_option("--mu-b", aa.mu_b, "Mean of the sham effects");
  adj->add_option("--sigma-b", aa.sigma_b, "Sd of the sham effects (inf allowed)");
  adj->add_option("--from-fit", aa.from_fit, "Take posterior means of mu_b and sigma_b from a fit JSON");

  SimulateArgs sa;
  auto* sim = app.add_subcommand("simulate", "Compare estimators on simulated replicates");
  add_input(sim, sa.input, sa.input_format, sa.convention, false);
  sim->add_option("--theta-source", sa.theta_source, "raw, draws or fixed")->capture_default_str();
  sim->add_option("--draws-file", sa.draws_file, "Draws CSV for --theta-source draws");
  sim->add_option("--from-fit", sa.from_fit, "Fit JSON whose theta means feed --theta-source fixed");
  sim->add_option("--noise", sa.noise, "normal or t")->capture_default_str();
  sim->add_option("--grid", sa.grid, "Comma-separated sigma_b values")->capture_default_str();
  sim->add_option("--sizes", sa.sizes, "Comma-separated study counts M (default: all)");
  sim->add_option("--replicates,-R", sa.replicates, "Replicates per grid point")->capture_default_str();
  sim->add_option("--sigma-y", sa.sigma_y, "Sampling sd of simulated estimates")->capture_default_str();
  sim->add_option("--mu-b", sa.mu_b, "Mean of simulated sham effects")->capture_default_str();
  sim->add_option("--estimators", sa.estimators, "Comma-separated estimators")->capture_default_str();
  add_model_flags(sim, sa.model);
  add_sampler_flags(sim, sa.sampler, "bayes-");

  DiagnoseArgs da;
  auto* diag = app.add_subcommand("diagnose", "Chi-square check of the sham arm and sham-vs-exposed scatter");
  add_input(diag, da.input, da.input_format, da.convention);

  std::vector<std::string> rev(args.rbegin(), args.rend());
  try {
    app.parse(rev);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp& e) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kValidation;
  }

  try {
    std::error_code ec;
    fs::create_directories(g.out_dir, ec);
    if (ec || !fs::is_directory(g.out_dir))
      throw ValidationError("cannot create output directory '" + g.out_dir + "'");
    const Output o{g.out_dir, {g.formats.begin(), g.formats.end()}, out};
    if (*est) return cmd_estimate(ea, o);
    if (*fit_cmd) return cmd_fit(fa, g, o);
    if (*adj) return cmd_adjust(aa, o);
    if (*sim) return cmd_simulate(sa, g, o);
    if (*diag) return cmd_diagnose(da, o);
  } catch (const ValidationError& e) {
    err << "error: " << e.what() << "\n";
    return kValidation;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kRuntime;
  }
  return kRuntime;
}

}  // namespace shambayes::cli
