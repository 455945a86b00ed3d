#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace svyperm {

// Maps dataset roles onto CSV column names. Unmapped columns in the input
// file are ignored. An empty stratum name means the dataset has no strata.
struct ColumnSchema {
  std::string y = "y";
  std::string g = "g";
  std::string w = "w";
  std::string cluster = "cluster";
  std::string stratum;
  std::vector<std::string> covariates;
};

struct Finding {
  std::string code;
  std::string message;
  std::vector<std::uint32_t> rows;  // 0-based dataset rows, empty when global
};

struct ValidationReport {
  bool ok = true;  // true iff issues is empty; warnings do not affect it
  std::vector<Finding> issues;
  std::vector<Finding> warnings;
};

// Columnar survey sample. The design matrix always carries an intercept as
// column 0; configured covariates follow. Cluster and stratum ids are
// re-indexed densely in order of first appearance, original names kept for
// output. Construction only enforces structural shape (equal column
// lengths); statistical preconditions are reported by validate().
class SurveyDataset {
 public:
  SurveyDataset() = default;

  static SurveyDataset from_columns(std::vector<double> y, std::vector<std::uint8_t> g,
                                    std::vector<double> w, std::vector<std::string> cluster,
                                    std::vector<std::vector<double>> covariates = {},
                                    std::vector<std::string> covariate_names = {},
                                    std::vector<std::string> strata = {});

  std::size_t n() const { return y_.size(); }
  std::size_t p() const { return 1 + covariates_.size(); }
  std::size_t cluster_count() const { return cluster_names_.size(); }
  std::size_t stratum_count() const { return stratum_names_.size(); }
  bool has_strata() const { return !stratum_names_.empty(); }

  std::span<const double> y() const { return y_; }
  std::span<const std::uint8_t> g() const { return g_; }
  std::span<const double> w() const { return w_; }
  std::span<const std::uint32_t> cluster() const { return cluster_; }
  std::span<const std::uint32_t> stratum() const { return stratum_; }

  // k in [0, p): 0 is the intercept
  std::span<const double> x_col(std::size_t k) const;

  const std::vector<std::string>& cluster_names() const { return cluster_names_; }
  const std::vector<std::string>& stratum_names() const { return stratum_names_; }
  const ColumnSchema& schema() const { return schema_; }

  void set_schema(ColumnSchema schema) { schema_ = std::move(schema); }
  void replace_y(std::vector<double> y);

 private:
  std::vector<double> y_;
  std::vector<std::uint8_t> g_;
  std::vector<double> w_;
  std::vector<std::uint32_t> cluster_;
  std::vector<std::uint32_t> stratum_;
  std::vector<double> intercept_;
  std::vector<std::vector<double>> covariates_;
  std::vector<std::string> cluster_names_;
  std::vector<std::string> stratum_names_;
  ColumnSchema schema_;
};

// Strict reader: throws SchemaError when mapped columns are missing or any
// mapped cell fails to parse (empty, non-numeric, non-finite, w <= 0,
// g outside {0,1}). Messages name the offending file lines.
SurveyDataset load_csv(const std::filesystem::path& path, const ColumnSchema& schema);

// Writes the mapped columns under their schema names, doubles with enough
// digits to round-trip exactly through load_csv.
void write_csv(const SurveyDataset& d, const std::filesystem::path& path);

ValidationReport validate(const SurveyDataset& d);

// Copy with y replaced by y - weighted_mean(y); weights are left untouched.
SurveyDataset center_weighted(const SurveyDataset& d);

double weighted_mean_y(const SurveyDataset& d);

}  // namespace svyperm
