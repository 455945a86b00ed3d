#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "svyperm/designs.hpp"
#include "svyperm/permtest.hpp"
#include "svyperm/simpop.hpp"

namespace svyperm {

// One calibration or power experiment: a population, a repeated sampling
// design, and the tests to run on every drawn sample.
struct StudyConfig {
  PopulationConfig population;
  DesignSpec design = SrsDesign{60};
  std::uint32_t replicates = 500;
  std::uint64_t m = 500;
  std::vector<double> alphas = {0.01, 0.05, 0.1};  // strictly increasing
  bool run_pseudo = true;
  bool run_naive = true;
  PConvention convention = PConvention::count_over_m;
  std::uint64_t seed = 1;
  unsigned threads = 1;
  std::string output_dir;  // optional; the CLI --out flag overrides it
};

struct StudyReplicate {
  double psi_observed = 0.0;
  double p_pseudo = 0.0;  // NaN when the mode is switched off
  double p_naive = 0.0;
};

struct StudyResult {
  std::vector<StudyReplicate> replicates;
  std::vector<double> alphas;
  std::vector<double> pseudo_rejection;  // per alpha, empty when mode off
  std::vector<double> naive_rejection;
  // psi_observed with its two-sided frequency among all replicates,
  // ascending in psi
  std::vector<std::pair<double, double>> empirical_curve;
};

// Seed plumbing, exposed so tests can replay any replicate in isolation.
std::uint64_t replicate_seed(std::uint64_t master_seed, std::uint64_t replicate);
std::uint64_t permutation_seed(std::uint64_t rep_seed, TestMode mode);

// Replicates are independent and slot-indexed, so results are identical for
// any thread count. A failing replicate aborts the study with its index in
// the message.
StudyResult run_study(const StudyConfig& cfg);

// (psi_i, #{j : |psi_j| >= |psi_i|} / R) pairs, ascending in psi.
std::vector<std::pair<double, double>> empirical_pvalues(std::span<const double> psi);

// fraction of p <= alpha
double rejection_rate(std::span<const double> p, double alpha);

// Writes per_replicate.csv, curves.csv, rates.csv and manifest.json into
// dir (created if needed).
void export_study(const StudyConfig& cfg, const StudyResult& result,
                  const std::filesystem::path& dir);

// Deterministic serialization of the full configuration.
std::string manifest_json(const StudyConfig& cfg);

// INI-style file with [population], [design], [test] and [output] sections;
// unknown sections or keys are rejected.
StudyConfig load_study_config(const std::filesystem::path& path);

}  // namespace svyperm
