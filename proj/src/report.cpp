#include "shambayes/report.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include <json.hpp>

#include "shambayes/detail/text.hpp"

namespace shambayes {

namespace {

using detail::format_double;
using nlohmann::json;
using nlohmann::ordered_json;

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

ordered_json num(double v) {
  if (std::isfinite(v)) return v;
  if (std::isnan(v)) return "NaN";
  return v > 0 ? "Infinity" : "-Infinity";
}

double read_num(const json& j) {
  if (j.is_number()) return j.get<double>();
  if (j.is_string()) {
    const auto s = j.get<std::string>();
    if (s == "NaN") return kNaN;
    if (s == "Infinity") return std::numeric_limits<double>::infinity();
    if (s == "-Infinity") return -std::numeric_limits<double>::infinity();
  }
  throw ValidationError("expected a number in JSON");
}

std::string dump(const ordered_json& j) { return j.dump(2) + "\n"; }

void fail_row(std::size_t row, const std::string& msg) {
  throw ValidationError("row " + std::to_string(row) + ": " + msg);
}

double field_double(std::string_view s, std::size_t row, std::string_view name) {
  const auto v = detail::parse_double(detail::trim(s));
  if (!v) fail_row(row, "cannot parse " + std::string(name) + " '" + std::string(s) + "'");
  return *v;
}

ordered_json param_json(const ParamSummary& p) {
  ordered_json o;
  o["name"] = p.name;
  o["mean"] = num(p.mean);
  o["sd"] = num(p.sd);
  o["q2.5"] = num(p.q025);
  o["q50"] = num(p.q50);
  o["q97.5"] = num(p.q975);
  o["rhat"] = num(p.rhat);
  o["ess_bulk"] = num(p.ess_bulk);
  o["mcse_mean"] = num(p.mcse_mean);
  o["mcse_sd"] = num(p.mcse_sd);
  return o;
}

ParamSummary param_from(const json& o) {
  ParamSummary p;
  p.name = o.at("name").get<std::string>();
  p.mean = read_num(o.at("mean"));
  p.sd = read_num(o.at("sd"));
  p.q025 = read_num(o.at("q2.5"));
  p.q50 = read_num(o.at("q50"));
  p.q975 = read_num(o.at("q97.5"));
  p.rhat = read_num(o.at("rhat"));
  p.ess_bulk = read_num(o.at("ess_bulk"));
  p.mcse_mean = read_num(o.at("mcse_mean"));
  p.mcse_sd = read_num(o.at("mcse_sd"));
  return p;
}

// ---------------------------------------------------------------------------
// Minimal SVG drawing.

std::string esc(std::string_view s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string f2(double v) {
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(2);
  os << v;
  return os.str();
}

std::string tick_label(double v) {
  if (std::fabs(v) < 1e-12) return "0";
  std::ostringstream os;
  os << v;
  return os.str();
}

std::vector<double> nice_ticks(double lo, double hi) {
  if (!(hi > lo)) return {lo};
  const double raw = (hi - lo) / 5.0;
  const double mag = std::pow(10.0, std::floor(std::log10(raw)));
  double step = mag;
  for (double m : {1.0, 2.0, 5.0, 10.0}) {
    if (m * mag >= raw) {
      step = m * mag;
      break;
    }
  }
  std::vector<double> t;
  for (double v = std::ceil(lo / step) * step; v <= hi + 1e-9 * step; v += step) t.push_back(v);
  return t;
}

struct Range {
  double lo = 0.0, hi = 1.0;
  void include(double v) {
    if (!std::isfinite(v)) return;
    if (empty) {
      lo = hi = v;
      empty = false;
    } else {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  }
  void pad() {
    if (empty) {
      lo = 0.0;
      hi = 1.0;
    }
    if (hi == lo) {
      lo -= 0.5;
      hi += 0.5;
    }
    const double d = 0.05 * (hi - lo);
    lo -= d;
    hi += d;
  }
  bool empty = true;
};

class Svg {
 public:
  Svg(double w, double h) : w_(w), h_(h) {}
  void raw(const std::string& s) { body_ += s + "\n"; }
  void line(double x1, double y1, double x2, double y2, std::string_view stroke, double width = 1.0,
            std::string_view dash = "") {
    body_ += "<line x1=\"" + f2(x1) + "\" y1=\"" + f2(y1) + "\" x2=\"" + f2(x2) + "\" y2=\"" + f2(y2) +
             "\" stroke=\"" + std::string(stroke) + "\" stroke-width=\"" + f2(width) + "\"" +
             (dash.empty() ? "" : " stroke-dasharray=\"" + std::string(dash) + "\"") + "/>\n";
  }
  void rect(double x, double y, double w, double h, std::string_view fill) {
    body_ += "<rect x=\"" + f2(x) + "\" y=\"" + f2(y) + "\" width=\"" + f2(w) + "\" height=\"" + f2(h) +
             "\" fill=\"" + std::string(fill) + "\"/>\n";
  }
  void circle(double x, double y, double r, std::string_view fill) {
    body_ += "<circle cx=\"" + f2(x) + "\" cy=\"" + f2(y) + "\" r=\"" + f2(r) + "\" fill=\"" +
             std::string(fill) + "\"/>\n";
  }
  void text(double x, double y, std::string_view s, double size = 11, std::string_view anchor = "middle",
            double rotate = 0.0) {
    body_ += "<text x=\"" + f2(x) + "\" y=\"" + f2(y) + "\" font-size=\"" + f2(size) +
             "\" font-family=\"sans-serif\" text-anchor=\"" + std::string(anchor) + "\"" +
             (rotate != 0.0 ? " transform=\"rotate(" + f2(rotate) + " " + f2(x) + " " + f2(y) + ")\"" : "") +
             ">" + esc(s) + "</text>\n";
  }
  void polyline(const std::vector<std::pair<double, double>>& pts, std::string_view stroke) {
    std::string p;
    for (const auto& [x, y] : pts) p += f2(x) + "," + f2(y) + " ";
    body_ += "<polyline fill=\"none\" stroke=\"" + std::string(stroke) + "\" stroke-width=\"1.5\" points=\"" + p +
             "\"/>\n";
  }
  std::string str() const {
    return "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + f2(w_) + "\" height=\"" + f2(h_) +
           "\" viewBox=\"0 0 " + f2(w_) + " " + f2(h_) + "\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n" +
           body_ + "</svg>\n";
  }

 private:
  double w_, h_;
  std::string body_;
};

/// A plotting area with linear (or log10 y) scales and drawn axes.
struct Panel {
  double x0, y0, w, h;
  Range xr, yr;
  bool log_y = false;

  double px(double x) const { return x0 + (x - xr.lo) / (xr.hi - xr.lo) * w; }
  double py(double y) const {
    const double v = log_y ? std::log10(y) : y;
    return y0 + h - (v - yr.lo) / (yr.hi - yr.lo) * h;
  }

  void axes(Svg& s, std::string_view xlabel, std::string_view ylabel, std::string_view title) const {
    s.line(x0, y0 + h, x0 + w, y0 + h, "black");
    s.line(x0, y0, x0, y0 + h, "black");
    for (double t : nice_ticks(xr.lo, xr.hi)) {
      s.line(px(t), y0 + h, px(t), y0 + h + 4, "black");
      s.text(px(t), y0 + h + 16, tick_label(t), 10);
    }
    for (double t : nice_ticks(yr.lo, yr.hi)) {
      const double y = y0 + h - (t - yr.lo) / (yr.hi - yr.lo) * h;
      s.line(x0 - 4, y, x0, y, "black");
      s.text(x0 - 6, y + 3, log_y ? "1e" + tick_label(t) : tick_label(t), 10, "end");
    }
    s.text(x0 + w / 2, y0 + h + 32, xlabel, 11);
    s.text(x0 - 42, y0 + h / 2, ylabel, 11, "middle", -90);
    s.text(x0 + w / 2, y0 - 8, title, 12);
  }
};

const char* band_colour(Band b) {
  switch (b) {
    case Band::below_001: return "#1f1f1f";
    case Band::below_005: return "#808080";
    case Band::not_significant: return "#d0d0d0";
  }
  return "#d0d0d0";
}

std::vector<double> positions(const std::vector<double>& x, std::size_t n) {
  if (x.size() == n) return x;
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = static_cast<double>(i + 1);
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------

std::string estimates_csv(const EstimateSet& e) {
  std::string out = "id,estimate,se\n";
  for (const auto& x : e.entries) out += x.id + "," + format_double(x.estimate) + "," + format_double(x.se) + "\n";
  return out;
}

std::string estimates_json(const EstimateSet& e) {
  ordered_json j;
  j["schema_version"] = 1;
  j["method"] = std::string(to_string(e.method));
  j["entries"] = ordered_json::array();
  for (const auto& x : e.entries) j["entries"].push_back({{"id", x.id}, {"estimate", num(x.estimate)}, {"se", num(x.se)}});
  return dump(j);
}

EstimateSet parse_estimates_csv(std::string_view text, Method method) {
  const auto ls = detail::lines(text);
  if (ls.empty()) throw ValidationError("estimate file is empty");
  const auto header = detail::split(ls[0].text, ',');
  if (header.size() < 3 || detail::trim(header[0]) != "id" || detail::trim(header[1]) != "estimate" ||
      detail::trim(header[2]) != "se")
    throw ValidationError("estimate file must start with columns id,estimate,se");
  EstimateSet e{method, {}};
  for (std::size_t i = 1; i < ls.size(); ++i) {
    const auto f = detail::split(ls[i].text, ',');
    if (f.size() != header.size()) fail_row(ls[i].number, "wrong number of fields");
    e.entries.push_back({std::string(detail::trim(f[0])), field_double(f[1], ls[i].number, "estimate"),
                         field_double(f[2], ls[i].number, "se")});
  }
  return e;
}

std::string significance_csv(const SignificanceTable& t) {
  std::string out = "id,statistic,p,band\n";
  for (const auto& x : t.entries)
    out += x.id + "," + format_double(x.statistic) + "," + format_double(x.p) + "," + std::string(to_string(x.band)) + "\n";
  return out;
}

std::string significance_json(const SignificanceTable& t) {
  ordered_json j;
  j["schema_version"] = 1;
  j["method"] = std::string(to_string(t.method));
  j["reference"] = t.reference == Reference::normal ? "normal" : "t";
  j["entries"] = ordered_json::array();
  for (const auto& x : t.entries)
    j["entries"].push_back({{"id", x.id}, {"statistic", num(x.statistic)}, {"p", num(x.p)},
                            {"band", std::string(to_string(x.band))}});
  return dump(j);
}

std::string adjustment_csv(const AdjustmentResult& a) {
  std::string out = "id,estimate,se,lambda,b_hat,s_post\n";
  for (const auto& x : a.entries)
    out += x.id + "," + format_double(x.theta_hat) + "," + format_double(x.se) + "," + format_double(x.lambda) + "," +
           format_double(x.b_hat) + "," + format_double(x.s_post) + "\n";
  return out;
}

std::string adjustment_json(const AdjustmentResult& a) {
  ordered_json j;
  j["schema_version"] = 1;
  j["mu_b"] = num(a.mu_b);
  j["sigma_b"] = num(a.sigma_b);
  j["entries"] = ordered_json::array();
  for (const auto& x : a.entries)
    j["entries"].push_back({{"id", x.id},
                            {"estimate", num(x.theta_hat)},
                            {"se", num(x.se)},
                            {"lambda", num(x.lambda)},
                            {"b_hat", num(x.b_hat)},
                            {"s_post", num(x.s_post)}});
  return dump(j);
}

std::string chi_square_json(const ChiSquareResult& c, std::size_t num_studies) {
  ordered_json j;
  j["schema_version"] = 1;
  j["statistic"] = num(c.stat);
  j["df"] = c.df;
  j["cdf"] = num(c.cdf);
  j["ratio"] = num(c.stat / static_cast<double>(num_studies));
  return dump(j);
}

// ---------------------------------------------------------------------------

std::string draws_csv(const Draws& d) {
  std::string out = "chain,iteration,divergent";
  for (const auto& n : d.names) out += "," + n;
  out += "\n";
  for (std::size_t c = 0; c < d.chains; ++c) {
    for (std::size_t i = 0; i < d.draws; ++i) {
      out += std::to_string(c + 1) + "," + std::to_string(i + 1) + "," +
             std::to_string(static_cast<int>(d.divergent[c * d.draws + i]));
      for (std::size_t p = 0; p < d.num_params(); ++p) out += "," + format_double(d.at(c, i, p));
      out += "\n";
    }
  }
  return out;
}

Draws parse_draws_csv(std::string_view text) {
  const auto ls = detail::lines(text);
  if (ls.empty()) throw ValidationError("draws file is empty");
  const auto header = detail::split(ls[0].text, ',');
  if (header.size() < 3 || detail::trim(header[0]) != "chain" || detail::trim(header[1]) != "iteration" ||
      detail::trim(header[2]) != "divergent")
    throw ValidationError("draws file must start with columns chain,iteration,divergent");
  Draws d;
  for (std::size_t k = 3; k < header.size(); ++k) d.names.emplace_back(detail::trim(header[k]));
  std::size_t expect_chain = 1, expect_iter = 1;
  std::vector<std::size_t> per_chain;
  for (std::size_t i = 1; i < ls.size(); ++i) {
    const auto f = detail::split(ls[i].text, ',');
    const std::size_t row = ls[i].number;
    if (f.size() != header.size()) fail_row(row, "wrong number of fields");
    const auto chain = detail::parse_int(detail::trim(f[0]));
    const auto iter = detail::parse_int(detail::trim(f[1]));
    const auto div = detail::parse_int(detail::trim(f[2]));
    if (!chain || !iter || !div || (*div != 0 && *div != 1)) fail_row(row, "bad chain, iteration or divergent field");
    if (static_cast<std::size_t>(*chain) == expect_chain + 1 && *iter == 1) {
      ++expect_chain;
      expect_iter = 1;
    }
    if (static_cast<std::size_t>(*chain) != expect_chain || static_cast<std::size_t>(*iter) != expect_iter)
      fail_row(row, "draws must be ordered by chain then iteration");
    if (per_chain.size() < expect_chain) per_chain.push_back(0);
    ++per_chain.back();
    ++expect_iter;
    d.divergent.push_back(static_cast<std::uint8_t>(*div));
    for (std::size_t k = 3; k < f.size(); ++k) d.values.push_back(field_double(f[k], row, d.names[k - 3]));
  }
  if (per_chain.empty()) throw ValidationError("draws file has no rows");
  for (auto n : per_chain) {
    if (n != per_chain.front()) throw ValidationError("chains have different numbers of draws");
  }
  d.chains = per_chain.size();
  d.draws = per_chain.front();
  return d;
}

std::string fit_summary_json(const FitSummary& s, const ModelSpec* spec, const SamplerConfig* config) {
  ordered_json j;
  j["schema_version"] = 1;
  j["converged"] = s.converged;
  j["chains"] = s.chains;
  j["draws_per_chain"] = s.draws_per_chain;
  j["divergences"] = s.divergences;
  j["warnings"] = s.warnings;
  if (spec) j["model"] = ordered_json::parse(model_spec_to_json(*spec));
  if (config) {
    j["sampler"] = {{"chains", config->chains},
                    {"warmup", config->warmup},
                    {"draws", config->draws},
                    {"target_accept", config->target_accept},
                    {"max_leapfrog", config->max_leapfrog},
                    {"seed", config->seed}};
  }
  j["params"] = ordered_json::array();
  for (const auto& p : s.params) j["params"].push_back(param_json(p));
  j["transformed"] = ordered_json::array();
  for (const auto& p : s.transformed) j["transformed"].push_back(param_json(p));
  j["studies"] = ordered_json::array();
  for (const auto& st : s.studies) {
    ordered_json o;
    o["id"] = st.id;
    o["theta_mean"] = num(st.theta_mean);
    o["theta_sd"] = num(st.theta_sd);
    o["b_mean"] = st.b_mean ? num(*st.b_mean) : ordered_json(nullptr);
    o["b_sd"] = st.b_sd ? num(*st.b_sd) : ordered_json(nullptr);
    j["studies"].push_back(o);
  }
  return dump(j);
}

FitSummary parse_fit_summary_json(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ValidationError(std::string("invalid fit summary JSON: ") + e.what());
  }
  FitSummary s;
  try {
    if (j.value("schema_version", 1) != 1) throw ValidationError("unsupported fit summary schema_version");
    s.converged = j.at("converged").get<bool>();
    s.chains = j.at("chains").get<std::size_t>();
    s.draws_per_chain = j.at("draws_per_chain").get<std::size_t>();
    s.divergences = j.at("divergences").get<std::size_t>();
    s.warnings = j.at("warnings").get<std::vector<std::string>>();
    for (const auto& p : j.at("params")) s.params.push_back(param_from(p));
    for (const auto& p : j.at("transformed")) s.transformed.push_back(param_from(p));
    for (const auto& o : j.at("studies")) {
      StudySummary st;
      st.id = o.at("id").get<std::string>();
      st.theta_mean = read_num(o.at("theta_mean"));
      st.theta_sd = read_num(o.at("theta_sd"));
      if (!o.at("b_mean").is_null()) st.b_mean = read_num(o.at("b_mean"));
      if (!o.at("b_sd").is_null()) st.b_sd = read_num(o.at("b_sd"));
      s.studies.push_back(std::move(st));
    }
  } catch (const json::exception& e) {
    throw ValidationError(std::string("malformed fit summary: ") + e.what());
  }
  return s;
}

std::string metrics_grid_csv(const MetricsGrid& g) {
  std::string out = "sigma_b,estimator,metric,value,n_replicates,n_failed,mc_se,n_used\n";
  for (const auto& c : g.cells) {
    const std::string prefix = format_double(c.sigma_b) + "," + std::string(to_string(c.estimator)) + ",";
    const std::string counts = "," + std::to_string(c.n_replicates) + "," + std::to_string(c.n_failed) + ",";
    for (int k = 0; k < kNumMetrics; ++k) {
      const auto& s = c.stats[k];
      out += prefix + std::string(to_string(static_cast<MetricKind>(k))) + "," + format_double(s.value) + counts +
             format_double(s.mc_se) + "," + std::to_string(s.n_used) + "\n";
    }
    if (c.estimator == Method::bayes) {
      const std::size_t ok = c.n_replicates - c.n_failed;
      const double frac = ok > 0 ? static_cast<double>(c.n_nonconverged) / static_cast<double>(ok) : kNaN;
      out += prefix + "nonconverged_fraction," + format_double(frac) + counts + "nan," + std::to_string(ok) + "\n";
    }
  }
  return out;
}

// ---------------------------------------------------------------------------

std::string estimates_svg(const EstimateSet& e, const SignificanceTable& t, const std::vector<double>& x_in) {
  const std::size_t n = e.entries.size();
  const auto x = positions(x_in, n);
  Svg s(900, 380);
  Panel a{70, 40, 340, 260, {}, {}};
  Panel b{520, 40, 340, 260, {}, {}};
  b.log_y = true;
  for (std::size_t i = 0; i < n; ++i) {
    a.xr.include(x[i]);
    b.xr.include(x[i]);
    a.yr.include(e.entries[i].estimate - 1.96 * e.entries[i].se);
    a.yr.include(e.entries[i].estimate + 1.96 * e.entries[i].se);
    a.yr.include(0.0);
    if (i < t.entries.size()) b.yr.include(std::log10(std::max(t.entries[i].p, 1e-300)));
  }
  b.yr.include(std::log10(0.01));
  b.yr.include(0.0);
  a.xr.pad();
  a.yr.pad();
  b.xr.pad();
  b.yr.pad();
  const double bar_w = std::max(2.0, 0.6 * a.w / std::max<std::size_t>(n, 1) * 0.8);
  s.line(a.x0, a.py(0.0), a.x0 + a.w, a.py(0.0), "#999999", 1.0, "4,3");
  for (std::size_t i = 0; i < n; ++i) {
    const auto& en = e.entries[i];
    const Band band = i < t.entries.size() ? t.entries[i].band : Band::not_significant;
    const double top = a.py(std::max(en.estimate, 0.0));
    const double bottom = a.py(std::min(en.estimate, 0.0));
    s.rect(a.px(x[i]) - bar_w / 2, top, bar_w, std::max(bottom - top, 0.5), band_colour(band));
    s.line(a.px(x[i]), a.py(en.estimate - 1.96 * en.se), a.px(x[i]), a.py(en.estimate + 1.96 * en.se), "black");
  }
  a.axes(s, x_in.size() == n ? "x" : "study", "estimate", std::string(to_string(e.method)) + " estimates");
  for (double p : {0.01, 0.05}) {
    const double yy = b.y0 + b.h - (std::log10(p) - b.yr.lo) / (b.yr.hi - b.yr.lo) * b.h;
    s.line(b.x0, yy, b.x0 + b.w, yy, "#999999", 1.0, "4,3");
  }
  for (std::size_t i = 0; i < t.entries.size() && i < n; ++i) {
    const double lp = std::log10(std::max(t.entries[i].p, 1e-300));
    const double yy = b.y0 + b.h - (lp - b.yr.lo) / (b.yr.hi - b.yr.lo) * b.h;
    s.circle(b.px(x[i]), yy, 3.5, band_colour(t.entries[i].band));
  }
  b.axes(s, x_in.size() == n ? "x" : "study", "p-value (log10)", "two-sided p-values");
  s.text(450, 368, "dark: p<0.01   grey: 0.01<=p<0.05   light: p>=0.05", 11);
  return s.str();
}

std::string sham_scatter_svg(const Dataset& d) {
  const Dataset sd = d.kind() == DataKind::count ? log_odds_transform(d) : d;
  const auto& rs = sd.summaries();
  Svg s(480, 420);
  Panel p{80, 40, 360, 320, {}, {}};
  for (const auto& r : rs) {
    p.xr.include(r.y0);
    p.yr.include(r.y1);
  }
  p.xr.include(0.0);
  p.yr.include(0.0);
  p.xr.pad();
  p.yr.pad();
  s.line(p.px(0.0), p.y0, p.px(0.0), p.y0 + p.h, "#bbbbbb", 1.0, "4,3");
  s.line(p.x0, p.py(0.0), p.x0 + p.w, p.py(0.0), "#bbbbbb", 1.0, "4,3");
  for (const auto& r : rs) s.circle(p.px(r.y0), p.py(r.y1), 3.5, "#333333");
  p.axes(s, "sham estimate y0", "exposed estimate y1", "sham vs exposed");
  return s.str();
}

std::string shrinkage_svg(const FitSummary& fs, const EstimateSet& raw, const std::vector<double>& x_in) {
  const std::size_t n = fs.studies.size();
  const auto x = positions(x_in, n);
  Svg s(640, 400);
  Panel p{80, 40, 520, 290, {}, {}};
  for (std::size_t i = 0; i < n; ++i) {
    p.xr.include(x[i]);
    p.yr.include(fs.studies[i].theta_mean - fs.studies[i].theta_sd);
    p.yr.include(fs.studies[i].theta_mean + fs.studies[i].theta_sd);
    if (i < raw.entries.size()) {
      p.yr.include(raw.entries[i].estimate - raw.entries[i].se);
      p.yr.include(raw.entries[i].estimate + raw.entries[i].se);
    }
  }
  p.xr.pad();
  p.yr.pad();
  const double off = std::min(6.0, p.w / std::max<std::size_t>(n, 1) / 4.0);
  for (std::size_t i = 0; i < n; ++i) {
    if (i < raw.entries.size()) {
      const auto& r = raw.entries[i];
      s.line(p.px(x[i]) - off, p.py(r.estimate - r.se), p.px(x[i]) - off, p.py(r.estimate + r.se), "#aaaaaa");
      s.circle(p.px(x[i]) - off, p.py(r.estimate), 3, "#aaaaaa");
    }
    const auto& st = fs.studies[i];
    s.line(p.px(x[i]) + off, p.py(st.theta_mean - st.theta_sd), p.px(x[i]) + off, p.py(st.theta_mean + st.theta_sd),
           "black");
    s.circle(p.px(x[i]) + off, p.py(st.theta_mean), 3, "black");
  }
  if (const auto* mu = fs.find("mu_theta"))
    s.line(p.x0, p.py(mu->mean), p.x0 + p.w, p.py(mu->mean), "#555555", 1.0, "4,3");
  p.axes(s, x_in.size() == n ? "x" : "study", "theta", "posterior mean +- sd (black) and raw estimate +- se (grey)");
  return s.str();
}

std::string metrics_grid_svg(const MetricsGrid& g, std::string_view title) {
  Svg s(860, 640);
  const char* colours[] = {"#d62728", "#1f77b4", "#2ca02c", "#9467bd"};
  std::vector<Method> methods;
  for (const auto& c : g.cells) {
    if (std::find(methods.begin(), methods.end(), c.estimator) == methods.end()) methods.push_back(c.estimator);
  }
  const char* labels[] = {"proportion significant", "type S error rate", "root mean squared error",
                          "rank correlation"};
  for (int k = 0; k < kNumMetrics; ++k) {
    Panel p{80.0 + (k % 2) * 410.0, 60.0 + (k / 2) * 280.0, 320, 200, {}, {}};
    for (const auto& c : g.cells) {
      p.xr.include(c.sigma_b);
      p.yr.include(c.stats[k].value);
    }
    if (k != 2 && k != 3) p.yr.include(0.0);
    p.xr.pad();
    p.yr.pad();
    for (std::size_t m = 0; m < methods.size(); ++m) {
      std::vector<std::pair<double, double>> pts;
      for (const auto& c : g.cells) {
        if (c.estimator == methods[m] && std::isfinite(c.stats[k].value))
          pts.emplace_back(p.px(c.sigma_b), p.py(c.stats[k].value));
      }
      s.polyline(pts, colours[m % 4]);
      for (const auto& [px, py] : pts) s.circle(px, py, 2.5, colours[m % 4]);
    }
    p.axes(s, "sigma_b", "", labels[k]);
  }
  for (std::size_t m = 0; m < methods.size(); ++m) {
    s.line(300.0 + m * 130.0, 24, 320.0 + m * 130.0, 24, colours[m % 4], 2.0);
    s.text(325.0 + m * 130.0, 28, to_string(methods[m]), 11, "start");
  }
  s.text(80, 28, title, 13, "start");
  return s.str();
}

}  // namespace shambayes
