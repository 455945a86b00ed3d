#include "svyperm/dataset.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <unordered_map>

#include "svyperm/errors.hpp"
#include "svyperm/kernels.hpp"

namespace svyperm {

namespace {

// One CSV record, with quoted fields unescaped. Handles "" escapes and
// newlines inside quotes; strips a trailing CR from unquoted fields.
struct CsvReader {
  explicit CsvReader(std::istream& in) : in_(in) {}

  bool next(std::vector<std::string>& fields, std::size_t& line_no) {
    fields.clear();
    int c = in_.get();
    if (c == EOF) return false;
    line_no = line_;
    std::string field;
    bool quoted = false;
    while (true) {
      if (c == EOF) {
        fields.push_back(std::move(field));
        return true;
      }
      if (quoted) {
        if (c == '"') {
          if (in_.peek() == '"') {
            in_.get();
            field.push_back('"');
          } else {
            quoted = false;
          }
        } else {
          if (c == '\n') ++line_;
          field.push_back(static_cast<char>(c));
        }
      } else if (c == '"' && field.empty()) {
        quoted = true;
      } else if (c == ',') {
        fields.push_back(std::move(field));
        field.clear();
      } else if (c == '\n') {
        ++line_;
        if (!field.empty() && field.back() == '\r') field.pop_back();
        fields.push_back(std::move(field));
        return true;
      } else {
        field.push_back(static_cast<char>(c));
      }
      c = in_.get();
    }
  }

 private:
  std::istream& in_;
  std::size_t line_ = 1;
};

bool parse_double(const std::string& s, double& out) {
  const char* first = s.data();
  const char* last = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(first, last, out);
  return ec == std::errc() && ptr == last;
}

std::string quote_if_needed(const std::string& s) {
  bool needs = s.empty();
  for (char c : s) {
    if (c == ',' || c == '"' || c == '\n' || c == '\r') {
      needs = true;
      break;
    }
  }
  if (!needs) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += "\"\"";
    else out.push_back(c);
  }
  out += "\"";
  return out;
}

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

class ErrorCollector {
 public:
  void add(std::size_t line, const std::string& what) {
    ++count_;
    if (count_ <= kMax) {
      messages_ += "  line " + std::to_string(line) + ": " + what + "\n";
    }
  }

  bool any() const { return count_ > 0; }

  std::string render(const std::string& path) const {
    std::string out = path + ": " + std::to_string(count_) + " bad row(s)\n" + messages_;
    if (count_ > kMax) {
      out += "  (" + std::to_string(count_ - kMax) + " more not shown)\n";
    }
    return out;
  }

 private:
  static constexpr std::size_t kMax = 20;
  std::size_t count_ = 0;
  std::string messages_;
};

std::uint32_t dense_id(const std::string& name, std::unordered_map<std::string, std::uint32_t>& map,
                       std::vector<std::string>& names) {
  auto [it, inserted] = map.emplace(name, static_cast<std::uint32_t>(names.size()));
  if (inserted) names.push_back(name);
  return it->second;
}

}  // namespace

SurveyDataset SurveyDataset::from_columns(std::vector<double> y, std::vector<std::uint8_t> g,
                                          std::vector<double> w, std::vector<std::string> cluster,
                                          std::vector<std::vector<double>> covariates,
                                          std::vector<std::string> covariate_names,
                                          std::vector<std::string> strata) {
  const std::size_t n = y.size();
  if (g.size() != n || w.size() != n || cluster.size() != n) {
    throw SchemaError("from_columns: column lengths differ");
  }
  if (!strata.empty() && strata.size() != n) {
    throw SchemaError("from_columns: strata length differs");
  }
  for (const auto& col : covariates) {
    if (col.size() != n) throw SchemaError("from_columns: covariate length differs");
  }
  if (covariate_names.size() != covariates.size()) {
    covariate_names.resize(covariates.size());
    for (std::size_t k = 0; k < covariate_names.size(); ++k) {
      if (covariate_names[k].empty()) covariate_names[k] = "x" + std::to_string(k + 1);
    }
  }

  SurveyDataset d;
  d.y_ = std::move(y);
  d.g_ = std::move(g);
  d.w_ = std::move(w);
  d.intercept_.assign(n, 1.0);
  d.covariates_ = std::move(covariates);
  d.schema_.covariates = std::move(covariate_names);

  std::unordered_map<std::string, std::uint32_t> cmap;
  d.cluster_.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    d.cluster_[i] = dense_id(cluster[i], cmap, d.cluster_names_);
  }
  if (!strata.empty()) {
    std::unordered_map<std::string, std::uint32_t> smap;
    d.stratum_.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      d.stratum_[i] = dense_id(strata[i], smap, d.stratum_names_);
    }
    d.schema_.stratum = "stratum";
  }
  return d;
}

std::span<const double> SurveyDataset::x_col(std::size_t k) const {
  if (k == 0) return intercept_;
  return covariates_.at(k - 1);
}

void SurveyDataset::replace_y(std::vector<double> y) {
  if (y.size() != y_.size()) throw SchemaError("replace_y: length differs");
  y_ = std::move(y);
}

SurveyDataset load_csv(const std::filesystem::path& path, const ColumnSchema& schema) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw SchemaError("cannot open " + path.string());

  CsvReader reader(in);
  std::vector<std::string> header;
  std::size_t line_no = 0;
  if (!reader.next(header, line_no)) throw SchemaError(path.string() + ": empty file");

  std::unordered_map<std::string, std::size_t> col_of;
  for (std::size_t i = 0; i < header.size(); ++i) col_of.emplace(header[i], i);

  auto find = [&](const std::string& name, std::vector<std::string>& missing) {
    auto it = col_of.find(name);
    if (it == col_of.end()) {
      missing.push_back(name);
      return std::size_t{0};
    }
    return it->second;
  };

  std::vector<std::string> missing;
  const std::size_t iy = find(schema.y, missing);
  const std::size_t ig = find(schema.g, missing);
  const std::size_t iw = find(schema.w, missing);
  const std::size_t ic = find(schema.cluster, missing);
  std::size_t is = 0;
  if (!schema.stratum.empty()) is = find(schema.stratum, missing);
  std::vector<std::size_t> icov(schema.covariates.size());
  for (std::size_t k = 0; k < schema.covariates.size(); ++k) {
    icov[k] = find(schema.covariates[k], missing);
  }
  if (!missing.empty()) {
    std::string msg = path.string() + ": missing column(s):";
    for (const auto& name : missing) msg += " " + name;
    throw SchemaError(msg);
  }

  std::vector<double> y, w;
  std::vector<std::uint8_t> g;
  std::vector<std::string> cluster, strata;
  std::vector<std::vector<double>> covs(schema.covariates.size());

  ErrorCollector errors;
  std::vector<std::string> fields;
  while (reader.next(fields, line_no)) {
    if (fields.size() == 1 && fields[0].empty()) continue;  // blank trailing line
    if (fields.size() != header.size()) {
      errors.add(line_no, "expected " + std::to_string(header.size()) + " fields, got " +
                              std::to_string(fields.size()));
      continue;
    }
    bool row_ok = true;
    auto bad = [&](const std::string& what) {
      errors.add(line_no, what);
      row_ok = false;
    };
    auto numeric = [&](std::size_t col, const std::string& role, double& out) {
      const std::string& cell = fields[col];
      if (cell.empty()) {
        bad(role + " ('" + header[col] + "') is empty");
        return false;
      }
      if (!parse_double(cell, out) || !std::isfinite(out)) {
        bad(role + " ('" + header[col] + "') is not a finite number: '" + cell + "'");
        return false;
      }
      return true;
    };

    double vy = 0, vw = 0, vg = 0;
    numeric(iy, "y", vy);
    if (numeric(ig, "g", vg) && vg != 0.0 && vg != 1.0) {
      bad("g ('" + header[ig] + "') must be 0 or 1, got '" + fields[ig] + "'");
    }
    if (numeric(iw, "w", vw) && vw <= 0.0) {
      bad("w ('" + header[iw] + "') must be positive, got '" + fields[iw] + "'");
    }
    if (fields[ic].empty()) bad("cluster ('" + header[ic] + "') is empty");
    if (!schema.stratum.empty() && fields[is].empty()) {
      bad("stratum ('" + header[is] + "') is empty");
    }
    std::vector<double> vcov(icov.size());
    for (std::size_t k = 0; k < icov.size(); ++k) {
      numeric(icov[k], "covariate", vcov[k]);
    }
    if (!row_ok) continue;

    y.push_back(vy);
    g.push_back(static_cast<std::uint8_t>(vg));
    w.push_back(vw);
    cluster.push_back(fields[ic]);
    if (!schema.stratum.empty()) strata.push_back(fields[is]);
    for (std::size_t k = 0; k < icov.size(); ++k) covs[k].push_back(vcov[k]);
  }
  if (errors.any()) throw SchemaError(errors.render(path.string()));

  SurveyDataset d = SurveyDataset::from_columns(std::move(y), std::move(g), std::move(w),
                                                std::move(cluster), std::move(covs),
                                                schema.covariates, std::move(strata));
  d.set_schema(schema);
  return d;
}

void write_csv(const SurveyDataset& d, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw SchemaError("cannot write " + path.string());

  const ColumnSchema& s = d.schema();
  out << quote_if_needed(s.y) << ',' << quote_if_needed(s.g) << ',' << quote_if_needed(s.w)
      << ',' << quote_if_needed(s.cluster);
  if (d.has_strata()) out << ',' << quote_if_needed(s.stratum.empty() ? "stratum" : s.stratum);
  for (std::size_t k = 0; k < s.covariates.size(); ++k) {
    out << ',' << quote_if_needed(s.covariates[k]);
  }
  out << '\n';

  for (std::size_t i = 0; i < d.n(); ++i) {
    out << format_double(d.y()[i]) << ',' << int(d.g()[i]) << ',' << format_double(d.w()[i])
        << ',' << quote_if_needed(d.cluster_names()[d.cluster()[i]]);
    if (d.has_strata()) out << ',' << quote_if_needed(d.stratum_names()[d.stratum()[i]]);
    for (std::size_t k = 1; k < d.p(); ++k) out << ',' << format_double(d.x_col(k)[i]);
    out << '\n';
  }
  if (!out) throw SchemaError("write failed: " + path.string());
}

ValidationReport validate(const SurveyDataset& d) {
  ValidationReport report;
  auto issue = [&](std::string code, std::string message, std::vector<std::uint32_t> rows = {}) {
    report.issues.push_back({std::move(code), std::move(message), std::move(rows)});
  };
  auto warn = [&](std::string code, std::string message, std::vector<std::uint32_t> rows = {}) {
    report.warnings.push_back({std::move(code), std::move(message), std::move(rows)});
  };

  const std::size_t n = d.n();
  if (n < 2) {
    issue("too_few_rows", "need at least 2 rows, have " + std::to_string(n));
  }

  std::vector<std::uint32_t> bad_y, bad_w, bad_g, bad_x;
  for (std::size_t i = 0; i < n; ++i) {
    if (!std::isfinite(d.y()[i])) bad_y.push_back(i);
    if (!(d.w()[i] > 0.0) || !std::isfinite(d.w()[i])) bad_w.push_back(i);
    if (d.g()[i] > 1) bad_g.push_back(i);
  }
  for (std::size_t k = 0; k < d.p(); ++k) {
    auto col = d.x_col(k);
    for (std::size_t i = 0; i < n; ++i) {
      if (!std::isfinite(col[i])) bad_x.push_back(i);
    }
  }
  if (!bad_y.empty()) issue("nonfinite_y", std::to_string(bad_y.size()) + " row(s) with non-finite y", bad_y);
  if (!bad_w.empty()) issue("nonpositive_weight", std::to_string(bad_w.size()) + " row(s) with w <= 0 or non-finite", bad_w);
  if (!bad_g.empty()) issue("bad_group_label", std::to_string(bad_g.size()) + " row(s) with g outside {0,1}", bad_g);
  if (!bad_x.empty()) issue("nonfinite_covariate", std::to_string(bad_x.size()) + " row(s) with non-finite covariates", bad_x);

  if (n > 0 && bad_g.empty()) {
    std::size_t ones = 0;
    for (std::size_t i = 0; i < n; ++i) ones += d.g()[i];
    if (ones == 0 || ones == n) {
      issue("degenerate_group", "all rows carry g = " + std::to_string(ones == 0 ? 0 : 1));
    }
  }

  const std::size_t C = d.cluster_count();
  std::vector<std::uint32_t> size_of(C, 0), first_row(C, 0), label_sum(C, 0);
  std::vector<bool> seen(C, false);
  for (std::size_t i = 0; i < n; ++i) {
    std::uint32_t c = d.cluster()[i];
    if (!seen[c]) {
      seen[c] = true;
      first_row[c] = static_cast<std::uint32_t>(i);
    }
    ++size_of[c];
    label_sum[c] += d.g()[i] > 1 ? 0 : d.g()[i];
  }
  std::vector<std::uint32_t> singletons, single_label;
  for (std::uint32_t c = 0; c < C; ++c) {
    if (size_of[c] == 1) singletons.push_back(first_row[c]);
    else if (label_sum[c] == 0 || label_sum[c] == size_of[c]) single_label.push_back(first_row[c]);
  }
  if (!singletons.empty()) {
    warn("singleton_cluster",
         std::to_string(singletons.size()) + " cluster(s) contain a single row; "
         "within-cluster rearrangement cannot move anything there",
         singletons);
  }
  if (!single_label.empty()) {
    warn("single_label_cluster",
         std::to_string(single_label.size()) + " cluster(s) carry only one group label",
         single_label);
  }

  report.ok = report.issues.empty();
  return report;
}

double weighted_mean_y(const SurveyDataset& d) {
  double sw = kernels::sum(d.w().data(), d.n());
  double swy = kernels::dot(d.w().data(), d.y().data(), d.n());
  return swy / sw;
}

SurveyDataset center_weighted(const SurveyDataset& d) {
  SurveyDataset out = d;
  double mean = weighted_mean_y(d);
  std::vector<double> y(d.y().begin(), d.y().end());
  kernels::add_scalar(y.data(), -mean, y.data(), y.size());
  out.replace_y(std::move(y));
  return out;
}

}  // namespace svyperm
