#include "shambayes/study_data.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <set>
#include <sstream>

#include <json.hpp>

#include "shambayes/detail/text.hpp"
#include "shambayes/stats.hpp"

namespace shambayes {

using detail::format_double;

namespace {

[[noreturn]] void fail(const std::string& msg) { throw ValidationError(msg); }

std::string where(const std::string& id) { return id.empty() ? "" : " (study '" + id + "')"; }

void require_finite(double v, const char* field, const std::string& id) {
  if (!std::isfinite(v)) fail(std::string("field ") + field + " must be finite" + where(id));
}

template <typename Record>
void check_unique_ids(const std::vector<Record>& records) {
  if (records.empty()) fail("dataset must contain at least one study (J >= 1)");
  std::set<std::string> seen;
  for (const auto& r : records) {
    if (!seen.insert(r.id).second) fail("duplicate study id '" + r.id + "'");
  }
}

}  // namespace

void validate(const StudyRecord& r) {
  if (r.id.empty()) fail("study id must not be empty");
  if (r.id.find_first_of(",\"\n\r") != std::string::npos)
    fail("study id must not contain commas, quotes or newlines" + where(r.id));
  if (r.x) require_finite(*r.x, "x", r.id);
  require_finite(r.y1, "y1", r.id);
  require_finite(r.s1, "s1", r.id);
  require_finite(r.y0, "y0", r.id);
  require_finite(r.s0, "s0", r.id);
  if (!(r.s1 > 0.0)) fail("standard error must be positive (field s1)" + where(r.id));
  if (!(r.s0 > 0.0)) fail("standard error must be positive (field s0)" + where(r.id));
  if (r.n1 && *r.n1 < 2) fail("sample size must be at least 2 (field n1)" + where(r.id));
  if (r.n0 && *r.n0 < 2) fail("sample size must be at least 2 (field n0)" + where(r.id));
}

void validate(const CountRecord& r) {
  if (r.id.empty()) fail("study id must not be empty");
  if (r.id.find_first_of(",\"\n\r") != std::string::npos)
    fail("study id must not contain commas, quotes or newlines" + where(r.id));
  if (r.N1 < 1) fail("total must be at least 1 (field N1)" + where(r.id));
  if (r.N0 < 1) fail("total must be at least 1 (field N0)" + where(r.id));
  if (r.n1 < 0 || r.n1 > r.N1) fail("count must satisfy 0 <= n1 <= N1" + where(r.id));
  if (r.n0 < 0 || r.n0 > r.N0) fail("count must satisfy 0 <= n0 <= N0" + where(r.id));
}

Dataset::Dataset(std::vector<StudyRecord> records) : records_(std::move(records)) {
  const auto& rs = std::get<0>(records_);
  check_unique_ids(rs);
  for (const auto& r : rs) validate(r);
}

Dataset::Dataset(std::vector<CountRecord> records) : records_(std::move(records)) {
  const auto& rs = std::get<1>(records_);
  check_unique_ids(rs);
  for (const auto& r : rs) validate(r);
}

DataKind Dataset::kind() const noexcept {
  return records_.index() == 0 ? DataKind::summary : DataKind::count;
}

std::size_t Dataset::size() const noexcept {
  return std::visit([](const auto& v) { return v.size(); }, records_);
}

const std::vector<StudyRecord>& Dataset::summaries() const {
  if (kind() != DataKind::summary) fail("operation requires summary (estimate/standard error) records");
  return std::get<0>(records_);
}

const std::vector<CountRecord>& Dataset::counts() const {
  if (kind() != DataKind::count) fail("operation requires count records");
  return std::get<1>(records_);
}

const std::string& Dataset::id(std::size_t j) const {
  return std::visit([j](const auto& v) -> const std::string& { return v.at(j).id; }, records_);
}

bool Dataset::has_covariate() const noexcept {
  if (kind() != DataKind::summary) return false;
  const auto& rs = std::get<0>(records_);
  return std::all_of(rs.begin(), rs.end(), [](const StudyRecord& r) { return r.x.has_value(); });
}

bool Dataset::has_sample_sizes() const noexcept {
  if (kind() != DataKind::summary) return false;
  const auto& rs = std::get<0>(records_);
  return std::all_of(rs.begin(), rs.end(),
                     [](const StudyRecord& r) { return r.n1.has_value() && r.n0.has_value(); });
}

std::vector<double> Dataset::covariates() const {
  const auto& rs = summaries();
  std::vector<double> x;
  x.reserve(rs.size());
  for (const auto& r : rs) {
    if (!r.x) fail("covariate x is required on every record" + where(r.id));
    x.push_back(*r.x);
  }
  return x;
}

// ---------------------------------------------------------------------------
// CSV

namespace {

struct CsvTable {
  std::map<std::string, std::size_t> column;
  std::vector<detail::Line> rows;
  std::vector<std::string> header;
};

CsvTable read_table(std::string_view text, const std::vector<std::string>& required,
                    const std::vector<std::string>& optional) {
  auto ls = detail::lines(text);
  if (ls.empty()) fail("dataset must contain at least one study (J >= 1); file is empty");
  CsvTable t;
  for (auto cell : detail::split(ls.front().text, ',')) {
    std::string name(detail::trim(cell));
    if (t.column.count(name)) fail("line 1: duplicate column '" + name + "'");
    const bool known = std::find(required.begin(), required.end(), name) != required.end() ||
                       std::find(optional.begin(), optional.end(), name) != optional.end();
    if (!known) fail("line 1: unknown column '" + name + "'");
    t.column[name] = t.header.size();
    t.header.push_back(name);
  }
  for (const auto& r : required) {
    if (!t.column.count(r)) fail("line 1: missing required column '" + r + "'");
  }
  t.rows.assign(ls.begin() + 1, ls.end());
  return t;
}

struct RowReader {
  const CsvTable& table;
  std::vector<std::string_view> cells;
  std::size_t line;

  RowReader(const CsvTable& t, const detail::Line& l) : table(t), line(l.number) {
    cells = detail::split(l.text, ',');
    if (cells.size() != t.header.size()) {
      fail("row " + std::to_string(line) + ": expected " + std::to_string(t.header.size()) +
           " fields, found " + std::to_string(cells.size()));
    }
  }

  std::optional<std::string_view> cell(const std::string& name) const {
    auto it = table.column.find(name);
    if (it == table.column.end()) return std::nullopt;
    auto v = detail::trim(cells[it->second]);
    if (v.empty()) return std::nullopt;
    return v;
  }

  [[noreturn]] void bad(const std::string& name, const std::string& what) const {
    fail("row " + std::to_string(line) + ": field " + name + " " + what);
  }

  std::string text(const std::string& name) const {
    auto v = cell(name);
    if (!v) bad(name, "is required");
    return std::string(*v);
  }

  std::optional<double> opt_real(const std::string& name) const {
    auto v = cell(name);
    if (!v) return std::nullopt;
    auto d = detail::parse_double(*v);
    if (!d) bad(name, "is not a number: '" + std::string(*v) + "'");
    return d;
  }

  double real(const std::string& name) const {
    auto d = opt_real(name);
    if (!d) bad(name, "is required");
    return *d;
  }

  std::optional<int> opt_integer(const std::string& name) const {
    auto v = cell(name);
    if (!v) return std::nullopt;
    auto i = detail::parse_int(*v);
    if (!i || *i < std::numeric_limits<int>::min() || *i > std::numeric_limits<int>::max())
      bad(name, "is not an integer: '" + std::string(*v) + "'");
    return static_cast<int>(*i);
  }

  int integer(const std::string& name) const {
    auto i = opt_integer(name);
    if (!i) bad(name, "is required");
    return *i;
  }
};

template <typename Record>
Dataset build_with_row_context(std::vector<Record> records, const std::vector<std::size_t>& rows) {
  for (std::size_t i = 0; i < records.size(); ++i) {
    try {
      validate(records[i]);
    } catch (const ValidationError& e) {
      fail("row " + std::to_string(rows[i]) + ": " + e.what());
    }
  }
  return Dataset(std::move(records));
}

}  // namespace

Dataset parse_summary_csv(std::string_view text) {
  const auto table =
      read_table(text, {"id", "y1", "s1", "y0", "s0"}, {"x", "n1", "n0"});
  std::vector<StudyRecord> records;
  std::vector<std::size_t> rows;
  for (const auto& line : table.rows) {
    RowReader row(table, line);
    StudyRecord r;
    r.id = row.text("id");
    r.x = row.opt_real("x");
    r.y1 = row.real("y1");
    r.s1 = row.real("s1");
    r.y0 = row.real("y0");
    r.s0 = row.real("s0");
    r.n1 = row.opt_integer("n1");
    r.n0 = row.opt_integer("n0");
    records.push_back(std::move(r));
    rows.push_back(line.number);
  }
  return build_with_row_context(std::move(records), rows);
}

Dataset parse_count_csv(std::string_view text) {
  const auto table = read_table(text, {"id", "n1", "N1", "n0", "N0"}, {});
  std::vector<CountRecord> records;
  std::vector<std::size_t> rows;
  for (const auto& line : table.rows) {
    RowReader row(table, line);
    CountRecord r;
    r.id = row.text("id");
    r.n1 = row.integer("n1");
    r.N1 = row.integer("N1");
    r.n0 = row.integer("n0");
    r.N0 = row.integer("N0");
    records.push_back(std::move(r));
    rows.push_back(line.number);
  }
  return build_with_row_context(std::move(records), rows);
}

std::string write_summary_csv(const Dataset& d) {
  std::ostringstream out;
  out << "id,x,y1,s1,y0,s0,n1,n0\n";
  for (const auto& r : d.summaries()) {
    out << r.id << ',' << (r.x ? format_double(*r.x) : "") << ',' << format_double(r.y1) << ','
        << format_double(r.s1) << ',' << format_double(r.y0) << ',' << format_double(r.s0) << ','
        << (r.n1 ? std::to_string(*r.n1) : "") << ',' << (r.n0 ? std::to_string(*r.n0) : "")
        << '\n';
  }
  return out.str();
}

std::string write_count_csv(const Dataset& d) {
  std::ostringstream out;
  out << "id,n1,N1,n0,N0\n";
  for (const auto& r : d.counts()) {
    out << r.id << ',' << r.n1 << ',' << r.N1 << ',' << r.n0 << ',' << r.N0 << '\n';
  }
  return out.str();
}

// ---------------------------------------------------------------------------
// JSON

namespace {

using nlohmann::json;

double json_real(const json& o, const char* key, std::size_t idx) {
  if (!o.contains(key) || !o[key].is_number())
    fail("study " + std::to_string(idx + 1) + ": field " + key + " must be a number");
  return o[key].get<double>();
}

int json_int(const json& o, const char* key, std::size_t idx) {
  if (!o.contains(key) || !o[key].is_number_integer())
    fail("study " + std::to_string(idx + 1) + ": field " + key + " must be an integer");
  return o[key].get<int>();
}

}  // namespace

Dataset parse_dataset_json(std::string_view text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    fail(std::string("invalid JSON: ") + e.what());
  }
  const json* studies = &doc;
  std::string kind;
  if (doc.is_object()) {
    if (doc.contains("schema_version") && doc["schema_version"] != 1)
      fail("unsupported schema_version (expected 1)");
    if (doc.contains("kind")) kind = doc["kind"].get<std::string>();
    if (!doc.contains("studies")) fail("JSON dataset must have a 'studies' array");
    studies = &doc["studies"];
  }
  if (!studies->is_array()) fail("JSON 'studies' must be an array");
  if (studies->empty()) fail("dataset must contain at least one study (J >= 1)");
  if (kind.empty()) kind = studies->front().contains("N1") ? "count" : "summary";

  if (kind == "count") {
    std::vector<CountRecord> records;
    for (std::size_t i = 0; i < studies->size(); ++i) {
      const auto& o = (*studies)[i];
      if (!o.is_object() || !o.contains("id") || !o["id"].is_string())
        fail("study " + std::to_string(i + 1) + ": field id must be a string");
      records.push_back({o["id"].get<std::string>(), json_int(o, "n1", i), json_int(o, "N1", i),
                         json_int(o, "n0", i), json_int(o, "N0", i)});
    }
    return Dataset(std::move(records));
  }
  if (kind != "summary") fail("unknown dataset kind '" + kind + "'");
  std::vector<StudyRecord> records;
  for (std::size_t i = 0; i < studies->size(); ++i) {
    const auto& o = (*studies)[i];
    if (!o.is_object() || !o.contains("id") || !o["id"].is_string())
      fail("study " + std::to_string(i + 1) + ": field id must be a string");
    StudyRecord r;
    r.id = o["id"].get<std::string>();
    if (o.contains("x") && !o["x"].is_null()) r.x = json_real(o, "x", i);
    r.y1 = json_real(o, "y1", i);
    r.s1 = json_real(o, "s1", i);
    r.y0 = json_real(o, "y0", i);
    r.s0 = json_real(o, "s0", i);
    if (o.contains("n1") && !o["n1"].is_null()) r.n1 = json_int(o, "n1", i);
    if (o.contains("n0") && !o["n0"].is_null()) r.n0 = json_int(o, "n0", i);
    records.push_back(std::move(r));
  }
  return Dataset(std::move(records));
}

std::string write_dataset_json(const Dataset& d) {
  json doc;
  doc["schema_version"] = 1;
  json studies = json::array();
  if (d.kind() == DataKind::count) {
    doc["kind"] = "count";
    for (const auto& r : d.counts())
      studies.push_back({{"id", r.id}, {"n1", r.n1}, {"N1", r.N1}, {"n0", r.n0}, {"N0", r.N0}});
  } else {
    doc["kind"] = "summary";
    for (const auto& r : d.summaries()) {
      json o = {{"id", r.id}, {"y1", r.y1}, {"s1", r.s1}, {"y0", r.y0}, {"s0", r.s0}};
      o["x"] = r.x ? json(*r.x) : json(nullptr);
      o["n1"] = r.n1 ? json(*r.n1) : json(nullptr);
      o["n0"] = r.n0 ? json(*r.n0) : json(nullptr);
      studies.push_back(std::move(o));
    }
  }
  doc["studies"] = std::move(studies);
  return doc.dump(2) + "\n";
}

// ---------------------------------------------------------------------------

std::optional<FileFormat> parse_file_format(std::string_view name) {
  if (name == "summary-csv") return FileFormat::summary_csv;
  if (name == "count-csv") return FileFormat::count_csv;
  if (name == "json") return FileFormat::json;
  return std::nullopt;
}

FileFormat detect_format(const std::filesystem::path& path) {
  if (path.extension() == ".json") return FileFormat::json;
  const auto text = detail::read_file(path);
  const auto ls = detail::lines(text);
  if (ls.empty()) fail("dataset must contain at least one study (J >= 1); file is empty");
  for (auto cell : detail::split(ls.front().text, ',')) {
    if (detail::trim(cell) == "N1") return FileFormat::count_csv;
  }
  return FileFormat::summary_csv;
}

Dataset ingest(const std::filesystem::path& path, FileFormat format) {
  if (!std::filesystem::exists(path)) fail("input file does not exist: " + path.string());
  const auto text = detail::read_file(path);
  switch (format) {
    case FileFormat::summary_csv: return parse_summary_csv(text);
    case FileFormat::count_csv: return parse_count_csv(text);
    case FileFormat::json: return parse_dataset_json(text);
  }
  fail("unknown file format");
}

Dataset ingest(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) fail("input file does not exist: " + path.string());
  return ingest(path, detect_format(path));
}

// ---------------------------------------------------------------------------

StudyRecord log_odds_transform(const CountRecord& c, LogOddsConvention convention) {
  validate(c);
  auto arm = [convention](int n, int N, double& y, double& s) {
    const double events = n + 0.5;
    const double others = (N - n) + 0.5;
    y = convention == LogOddsConvention::paper ? std::log(events / (N + 1.0))
                                               : std::log(events / others);
    s = std::sqrt(1.0 / events + 1.0 / others);
  };
  StudyRecord r;
  r.id = c.id;
  arm(c.n1, c.N1, r.y1, r.s1);
  arm(c.n0, c.N0, r.y0, r.s0);
  if (c.N1 >= 2) r.n1 = c.N1;
  if (c.N0 >= 2) r.n0 = c.N0;
  return r;
}

Dataset log_odds_transform(const Dataset& d, LogOddsConvention convention) {
  std::vector<StudyRecord> out;
  out.reserve(d.size());
  for (const auto& c : d.counts()) out.push_back(log_odds_transform(c, convention));
  return Dataset(std::move(out));
}

ChiSquareResult sham_chi_square(const Dataset& d) {
  ChiSquareResult r;
  for (const auto& s : d.summaries()) {
    const double z = s.y0 / s.s0;
    r.stat += z * z;
  }
  r.df = static_cast<int>(d.size());
  r.cdf = stats::chi_square_cdf(r.stat, r.df);
  return r;
}

Dataset rescale_sham_ses(const Dataset& d, double factor) {
  if (!std::isfinite(factor) || !(factor > 0.0))
    fail("rescale factor must be positive and finite");
  auto records = d.summaries();
  for (auto& r : records) r.s0 *= factor;
  return Dataset(std::move(records));
}

}  // namespace shambayes
