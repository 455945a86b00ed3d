#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string_view>
#include <vector>

#include "svyperm/dataset.hpp"

namespace svyperm {

// How group labels attach to the finite population:
//   A: per unit, Bernoulli(1/2), independent of the outcome
//   B: per unit, Bernoulli(rate_i) with a uniform per-cluster rate
//   C: per cluster, the whole cluster shares one Bernoulli(1/2) label
enum class LabelScheme { A, B, C };

const char* to_string(LabelScheme s);
std::optional<LabelScheme> parse_label_scheme(std::string_view s);

struct PopulationConfig {
  std::uint32_t clusters = 500;
  std::uint32_t cluster_size = 20;
  double sigma_nu = 4.0;
  double sigma_eps = 0.5;
  double delta = 0.0;  // group effect; y gets delta*g - delta/2
  LabelScheme labels = LabelScheme::B;
  std::uint64_t seed = 1;
};

// sd of the combined cluster-plus-unit noise, sqrt(sigma_nu^2 + sigma_eps^2)
double sigma_eta(const PopulationConfig& cfg);

double mu_of_label(double delta, std::uint8_t g);

// Finite population in cluster blocks: row i*cluster_size + j is unit j of
// cluster i. y = mu(g) + true_nu[cluster] + true_eps[row], evaluated left to
// right, so the decomposition can be reconstructed bit for bit.
struct SimulatedPopulation {
  PopulationConfig config;
  std::vector<double> y;
  std::vector<std::uint8_t> g;
  std::vector<std::uint32_t> cluster;
  std::vector<double> true_nu;   // per cluster
  std::vector<double> true_eps;  // per row

  std::size_t size() const { return y.size(); }
};

// Deterministic in cfg: cluster i consumes only its own derived stream, in
// the order nu, cluster-level label draws, then per unit label, eps.
SimulatedPopulation generate_population(const PopulationConfig& cfg);

// Census view: every unit, w = 1, cluster ids as decimal strings.
SurveyDataset census_dataset(const SimulatedPopulation& pop);

void write_population_csv(const SimulatedPopulation& pop, const std::filesystem::path& path);

// Sidecar with the generating effects: row,cluster,true_nu,true_eps.
void write_effects_csv(const SimulatedPopulation& pop, const std::filesystem::path& path);

}  // namespace svyperm
