#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "svyperm/dataset.hpp"
#include "svyperm/simpop.hpp"

namespace svyperm {

// Simple random sample of n units; w = N / n.
struct SrsDesign {
  std::uint32_t n = 0;
};

// Whole-cluster sample of `clusters` clusters; w = C_pop / clusters.
struct ClusterDesign {
  std::uint32_t clusters = 0;
};

enum class StrataRule {
  eta_quartiles,                 // quartiles of nu + eps, 4 strata
  group_label,                   // g itself, 2 strata
  eta_quartiles_by_group_label,  // crossed, 8 strata
};

const char* to_string(StrataRule rule);
std::optional<StrataRule> parse_strata_rule(std::string_view s);
std::size_t stratum_count(StrataRule rule);
std::vector<std::string> stratum_names(StrataRule rule);

// Stratified SRS without replacement; w = N_h / n_h within stratum h. The
// per-stratum sizes n_h are either given outright in `sizes` or derived from
// relative `fractions` scaled to total n by largest-remainder rounding
// (empty fractions mean proportional allocation).
struct StratifiedDesign {
  StrataRule rule = StrataRule::eta_quartiles;
  std::vector<double> fractions;
  std::uint32_t n = 0;
  std::vector<std::uint32_t> sizes;  // when nonempty, overrides fractions/n
};

using DesignSpec = std::variant<SrsDesign, ClusterDesign, StratifiedDesign>;

const char* design_kind(const DesignSpec& spec);

// Rank-based quartile assignment with boundary ties going to the lower
// stratum: the k/4 quantile is the ceil(k*N/4)-th smallest value and units
// <= it (and above the previous boundary) land in stratum k-1.
std::vector<std::uint32_t> assign_quartiles(std::span<const double> values);

std::vector<std::uint32_t> strata_assignment(const SimulatedPopulation& pop, StrataRule rule);

// Largest-remainder apportionment of n across strata with capacities N_h
// and relative rates fractions[h]; every nonempty stratum gets at least one
// unit or the spec is rejected as infeasible.
std::vector<std::uint32_t> allocate_largest_remainder(std::span<const std::uint32_t> stratum_sizes,
                                                      std::span<const double> fractions,
                                                      std::uint32_t n);

// Draws one sample; deterministic in (pop, spec, seed). Rows keep population
// order; weights are the usual inverse inclusion probabilities, constant
// within a design cell.
SurveyDataset draw_sample(const SimulatedPopulation& pop, const DesignSpec& spec,
                          std::uint64_t seed);

}  // namespace svyperm
