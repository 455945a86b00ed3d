#include "svyperm/decomposer.hpp"

#include <algorithm>
#include <cmath>

#include "svyperm/errors.hpp"
#include "svyperm/kernels.hpp"

namespace svyperm {

ClusterDecomposition decompose(const SurveyDataset& d, std::span<const double> residuals) {
  const std::size_t n = d.n();
  if (residuals.size() != n) {
    throw SchemaError("decompose: residual length " + std::to_string(residuals.size()) +
                      " does not match dataset rows " + std::to_string(n));
  }
  const std::size_t C = d.cluster_count();

  ClusterDecomposition c;
  c.labels.assign(d.g().begin(), d.g().end());
  c.cluster_of.assign(d.cluster().begin(), d.cluster().end());

  std::vector<double> eta_raw(n);
  kernels::multiply(d.w().data(), residuals.data(), eta_raw.data(), n);

  c.cluster_sizes.assign(C, 0);
  c.group_counts.assign(C, 0);
  for (std::size_t i = 0; i < n; ++i) {
    ++c.cluster_sizes[c.cluster_of[i]];
    c.group_counts[c.cluster_of[i]] += c.labels[i];
  }

  c.offset.assign(C + 1, 0);
  for (std::size_t i = 0; i < C; ++i) c.offset[i + 1] = c.offset[i] + c.cluster_sizes[i];
  c.row_at.assign(n, 0);
  {
    std::vector<std::uint32_t> cursor(c.offset.begin(), c.offset.end() - 1);
    for (std::size_t i = 0; i < n; ++i) {
      c.row_at[cursor[c.cluster_of[i]]++] = static_cast<std::uint32_t>(i);
    }
  }

  c.nu_hat.assign(C, 0.0);
  std::vector<double> sorted;
  for (std::size_t i = 0; i < C; ++i) {
    sorted.clear();
    for (std::uint32_t q = c.offset[i]; q < c.offset[i + 1]; ++q) {
      sorted.push_back(eta_raw[c.row_at[q]]);
    }
    std::sort(sorted.begin(), sorted.end());
    double acc = 0.0;
    for (double v : sorted) acc += v;
    c.nu_hat[i] = acc / static_cast<double>(c.cluster_sizes[i]);
  }

  c.eps_hat.resize(n);
  c.eta.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    double nu = c.nu_hat[c.cluster_of[i]];
    c.eps_hat[i] = eta_raw[i] - nu;
    c.eta[i] = nu + c.eps_hat[i];
  }

  c.eps_grouped.resize(n);
  c.eta_grouped.resize(n);
  c.labels_grouped.resize(n);
  for (std::size_t q = 0; q < n; ++q) {
    c.eps_grouped[q] = c.eps_hat[c.row_at[q]];
    c.eta_grouped[q] = c.eta[c.row_at[q]];
    c.labels_grouped[q] = c.labels[c.row_at[q]];
  }
  return c;
}

ConditionDiagnostics diagnostics(const ClusterDecomposition& c) {
  ConditionDiagnostics out;
  const std::size_t C = c.cluster_count();
  if (C == 0) return out;

  std::uint32_t min_count = c.group_counts[0], max_count = c.group_counts[0];
  std::uint32_t min_size = c.cluster_sizes[0];
  for (std::size_t i = 1; i < C; ++i) {
    min_count = std::min(min_count, c.group_counts[i]);
    max_count = std::max(max_count, c.group_counts[i]);
    min_size = std::min(min_size, c.cluster_sizes[i]);
  }
  out.max_group_count_gap = static_cast<double>(max_count - min_count);
  out.cluster_size_ratio_indicator =
      static_cast<double>(C) / std::sqrt(static_cast<double>(min_size));

  for (std::size_t i = 0; i < C; ++i) {
    const double* eps = c.eps_grouped.data() + c.offset[i];
    const std::size_t len = c.cluster_sizes[i];
    double m2 = kernels::dot(eps, eps, len) / static_cast<double>(len);
    out.second_moment_bound = std::max(out.second_moment_bound, m2);
  }
  return out;
}

}  // namespace svyperm
