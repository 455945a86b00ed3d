#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "svyperm/dataset.hpp"

namespace svyperm {

// Split of the weighted residual contributions eta_ij = w_ij * r_ij into an
// unweighted within-cluster mean nu_hat_i and the remainder eps_hat_ij.
//
// eta is stored re-rounded through the split, eta = fl(nu_hat + eps_hat),
// which is within one rounding of w*r and makes the reconstruction identity
// and the identity-rearrangement of the permutation engine hold bit for bit.
// nu_hat sums each cluster's values in ascending value order, so it does not
// depend on row order.
struct ClusterDecomposition {
  // per row, original order
  std::vector<double> eta;
  std::vector<double> eps_hat;
  std::vector<std::uint8_t> labels;
  std::vector<std::uint32_t> cluster_of;

  // per cluster
  std::vector<double> nu_hat;
  std::vector<std::uint32_t> cluster_sizes;
  std::vector<std::uint32_t> group_counts;  // rows with g = 1

  // cluster-contiguous layout for the permutation engine: grouped position
  // q holds original row row_at[q]; cluster i spans [offset[i], offset[i+1])
  std::vector<std::uint32_t> offset;
  std::vector<std::uint32_t> row_at;
  std::vector<double> eps_grouped;
  std::vector<double> eta_grouped;
  std::vector<std::uint8_t> labels_grouped;

  std::size_t n() const { return eta.size(); }
  std::size_t cluster_count() const { return nu_hat.size(); }
};

ClusterDecomposition decompose(const SurveyDataset& d, std::span<const double> residuals);

// Printable summaries of how far the sample is from the balanced,
// equal-size layout under which the rearrangement distribution is cleanest.
struct ConditionDiagnostics {
  double max_group_count_gap = 0.0;         // max |n_k(1) - n_l(1)| over cluster pairs
  double cluster_size_ratio_indicator = 0.0;  // C * max_i n_i^{-1/2}
  double second_moment_bound = 0.0;         // max_i mean_j eps_hat_ij^2
};

ConditionDiagnostics diagnostics(const ClusterDecomposition& c);

}  // namespace svyperm
