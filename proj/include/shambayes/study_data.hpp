#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace shambayes {

/// Raised for any input that violates a documented invariant. The CLI maps
/// it to exit code 2.
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// One paired active/sham experiment summarized as estimate and standard
/// error per arm.
struct StudyRecord {
  std::string id;
  std::optional<double> x;  // covariate, e.g. field frequency in Hz
  double y1 = 0.0;
  double s1 = 1.0;
  double y0 = 0.0;
  double s0 = 1.0;
  std::optional<int> n1;
  std::optional<int> n0;

  bool operator==(const StudyRecord&) const = default;
};

/// Remission (event) counts out of totals in each arm.
struct CountRecord {
  std::string id;
  int n1 = 0;
  int N1 = 1;
  int n0 = 0;
  int N0 = 1;

  bool operator==(const CountRecord&) const = default;
};

enum class DataKind { summary, count };

void validate(const StudyRecord& r);
void validate(const CountRecord& r);

/// Ordered, validated collection of records of a single kind. Index j is
/// stable for the lifetime of the object.
class Dataset {
 public:
  explicit Dataset(std::vector<StudyRecord> records);
  explicit Dataset(std::vector<CountRecord> records);

  DataKind kind() const noexcept;
  std::size_t size() const noexcept;

  // Throw ValidationError when the dataset is of the other kind.
  const std::vector<StudyRecord>& summaries() const;
  const std::vector<CountRecord>& counts() const;

  const std::string& id(std::size_t j) const;
  bool has_covariate() const noexcept;
  bool has_sample_sizes() const noexcept;

  std::vector<double> covariates() const;

  bool operator==(const Dataset&) const = default;

 private:
  std::variant<std::vector<StudyRecord>, std::vector<CountRecord>> records_;
};

enum class FileFormat { summary_csv, count_csv, json };

std::optional<FileFormat> parse_file_format(std::string_view name);

/// Picks a format from the file extension and, for CSV, from the header line.
FileFormat detect_format(const std::filesystem::path& path);

Dataset ingest(const std::filesystem::path& path, FileFormat format);
Dataset ingest(const std::filesystem::path& path);

Dataset parse_summary_csv(std::string_view text);
Dataset parse_count_csv(std::string_view text);
Dataset parse_dataset_json(std::string_view text);

std::string write_summary_csv(const Dataset& d);
std::string write_count_csv(const Dataset& d);
std::string write_dataset_json(const Dataset& d);

enum class LogOddsConvention {
  paper,             // log((n + 0.5) / (N + 1))
  haldane_anscombe,  // log((n + 0.5) / (N - n + 0.5))
};

StudyRecord log_odds_transform(const CountRecord& c,
                               LogOddsConvention convention = LogOddsConvention::paper);
Dataset log_odds_transform(const Dataset& d,
                           LogOddsConvention convention = LogOddsConvention::paper);

struct ChiSquareResult {
  double stat = 0.0;
  int df = 0;
  double cdf = 0.0;
};

/// Sum of squared sham z-scores against the chi-square(J) reference.
ChiSquareResult sham_chi_square(const Dataset& d);

/// Multiplies every sham standard error by `factor`.
Dataset rescale_sham_ses(const Dataset& d, double factor);

}  // namespace shambayes
