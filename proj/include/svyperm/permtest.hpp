#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "svyperm/decomposer.hpp"

namespace svyperm {

enum class TestMode {
  pseudo_cluster,  // rearrange nu_hat across clusters, eps_hat within
  naive_global,    // rearrange eta freely across all rows
  iid_mean_diff,   // unweighted mean difference on raw y
  exact_cluster,   // full enumeration of the cluster rearrangement space
};

enum class PConvention {
  count_over_m,  // count / m, identity not added to the draws
  add_one,       // (count + 1) / (m + 1)
};

enum class Sidedness { two_sided, greater, less };

const char* to_string(TestMode mode);
const char* to_string(PConvention convention);
const char* to_string(Sidedness sidedness);
std::optional<TestMode> parse_test_mode(std::string_view s);
std::optional<PConvention> parse_p_convention(std::string_view s);
std::optional<Sidedness> parse_sidedness(std::string_view s);

struct TestOptions {
  PConvention convention = PConvention::count_over_m;
  Sidedness sidedness = Sidedness::two_sided;
  unsigned threads = 1;  // draws are independent; results do not depend on this
};

struct PermutationTestResult {
  double psi_observed = 0.0;
  std::vector<double> psi_permuted;
  double p_value = 1.0;
  TestMode mode = TestMode::pseudo_cluster;
  std::uint64_t m = 0;     // draws, or the full space size for exact tests
  std::uint64_t seed = 0;  // 0 for exact tests
};

// One rearrangement: sigma0 permutes clusters (which cluster donates its
// shared component), within[i] permutes positions inside cluster i. Group
// labels never move.
struct PermutationPlan {
  std::vector<std::uint32_t> sigma0;
  std::vector<std::vector<std::uint32_t>> within;

  static PermutationPlan identity(const ClusterDecomposition& c);
};

// sum of values over rows with g = 1
double statistic_psi(std::span<const double> values, std::span<const std::uint8_t> g);

// Pseudo-values nu_hat[sigma0(i)] + eps_hat[i, sigma_i(j)] in original row
// order. Validates that the plan is a family of bijections of the right
// sizes. The identity plan returns eta bit for bit.
std::vector<double> pseudo_permute(const ClusterDecomposition& c, const PermutationPlan& plan);

// values[sigma[k]] for each k; sigma must be a bijection on [0, n)
std::vector<double> naive_permute(std::span<const double> values,
                                  std::span<const std::uint32_t> sigma);

// Monte Carlo test with m independent rearrangement draws. mode selects
// pseudo_cluster or naive_global; draw t is reproducible from (seed, t)
// alone. Both modes share psi_observed bit for bit. Throws
// std::invalid_argument for other modes, m = 0 or single-group labels.
PermutationTestResult run_test(const ClusterDecomposition& c, TestMode mode, std::uint64_t m,
                               std::uint64_t seed, const TestOptions& opt = {});

// Enumerates the entire rearrangement space (C! * prod n_i! plans including
// the identity); p is count / space regardless of opt.convention, hence a
// positive multiple of 1 / space. Throws EnumerationCapError beyond cap.
PermutationTestResult exact_test(const ClusterDecomposition& c, std::uint64_t cap = 1000000,
                                 const TestOptions& opt = {});

// Baseline that ignores weights and clustering: statistic mean(y | g=1) -
// mean(y | g=0), labels effectively reassigned by globally permuting y.
PermutationTestResult iid_mean_diff_test(std::span<const double> y,
                                         std::span<const std::uint8_t> g, std::uint64_t m,
                                         std::uint64_t seed, const TestOptions& opt = {});

// Exact version over all choose(n, n1) assignments of the g = 1 positions.
PermutationTestResult iid_mean_diff_exact(std::span<const double> y,
                                          std::span<const std::uint8_t> g,
                                          std::uint64_t cap = 1000000,
                                          const TestOptions& opt = {});

}  // namespace svyperm
