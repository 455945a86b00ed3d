#include "svyperm/designs.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "svyperm/errors.hpp"
#include "svyperm/rng.hpp"

namespace svyperm {

namespace {
constexpr std::uint64_t kDesignStream = 0x64736774ull;  // "dsgt"

SurveyDataset dataset_from_rows(const SimulatedPopulation& pop,
                                const std::vector<std::uint32_t>& rows,
                                const std::vector<double>& weights,
                                const std::vector<std::string>* strata_of_row) {
  std::vector<double> y(rows.size());
  std::vector<std::uint8_t> g(rows.size());
  std::vector<std::string> cluster(rows.size());
  std::vector<std::string> strata;
  if (strata_of_row) strata.resize(rows.size());
  for (std::size_t k = 0; k < rows.size(); ++k) {
    y[k] = pop.y[rows[k]];
    g[k] = pop.g[rows[k]];
    cluster[k] = std::to_string(pop.cluster[rows[k]]);
    if (strata_of_row) strata[k] = (*strata_of_row)[k];
  }
  return SurveyDataset::from_columns(std::move(y), std::move(g), weights, std::move(cluster), {},
                                     {}, std::move(strata));
}

}  // namespace

const char* to_string(StrataRule rule) {
  switch (rule) {
    case StrataRule::eta_quartiles: return "eta_quartiles";
    case StrataRule::group_label: return "group_label";
    case StrataRule::eta_quartiles_by_group_label: return "eta_quartiles_by_group_label";
  }
  return "?";
}

std::optional<StrataRule> parse_strata_rule(std::string_view s) {
  if (s == "eta_quartiles") return StrataRule::eta_quartiles;
  if (s == "group_label") return StrataRule::group_label;
  if (s == "eta_quartiles_by_group_label") return StrataRule::eta_quartiles_by_group_label;
  return std::nullopt;
}

std::size_t stratum_count(StrataRule rule) {
  switch (rule) {
    case StrataRule::eta_quartiles: return 4;
    case StrataRule::group_label: return 2;
    case StrataRule::eta_quartiles_by_group_label: return 8;
  }
  return 0;
}

std::vector<std::string> stratum_names(StrataRule rule) {
  switch (rule) {
    case StrataRule::eta_quartiles: return {"q1", "q2", "q3", "q4"};
    case StrataRule::group_label: return {"g0", "g1"};
    case StrataRule::eta_quartiles_by_group_label:
      return {"q1g0", "q1g1", "q2g0", "q2g1", "q3g0", "q3g1", "q4g0", "q4g1"};
  }
  return {};
}

const char* design_kind(const DesignSpec& spec) {
  if (std::holds_alternative<SrsDesign>(spec)) return "srs";
  if (std::holds_alternative<ClusterDesign>(spec)) return "cluster";
  return "stratified";
}

std::vector<std::uint32_t> assign_quartiles(std::span<const double> values) {
  const std::size_t N = values.size();
  if (N == 0) return {};
  std::vector<double> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());
  double q[3];
  for (std::size_t k = 1; k <= 3; ++k) {
    std::size_t rank = (k * N + 3) / 4;  // ceil(k*N/4), 1-based
    q[k - 1] = sorted[rank - 1];
  }
  std::vector<std::uint32_t> out(N);
  for (std::size_t i = 0; i < N; ++i) {
    double v = values[i];
    out[i] = v <= q[0] ? 0 : v <= q[1] ? 1 : v <= q[2] ? 2 : 3;
  }
  return out;
}

std::vector<std::uint32_t> strata_assignment(const SimulatedPopulation& pop, StrataRule rule) {
  const std::size_t N = pop.size();
  if (rule == StrataRule::group_label) {
    std::vector<std::uint32_t> out(N);
    for (std::size_t i = 0; i < N; ++i) out[i] = pop.g[i];
    return out;
  }
  std::vector<double> eta(N);
  for (std::size_t i = 0; i < N; ++i) eta[i] = pop.true_nu[pop.cluster[i]] + pop.true_eps[i];
  std::vector<std::uint32_t> quart = assign_quartiles(eta);
  if (rule == StrataRule::eta_quartiles) return quart;
  for (std::size_t i = 0; i < N; ++i) quart[i] = quart[i] * 2 + pop.g[i];
  return quart;
}

std::vector<std::uint32_t> allocate_largest_remainder(std::span<const std::uint32_t> stratum_sizes,
                                                      std::span<const double> fractions,
                                                      std::uint32_t n) {
  const std::size_t H = stratum_sizes.size();
  if (fractions.size() != H) {
    throw SchemaError("allocation: " + std::to_string(fractions.size()) + " fractions for " +
                      std::to_string(H) + " strata");
  }
  double denom = 0.0;
  for (std::size_t h = 0; h < H; ++h) {
    if (!(fractions[h] > 0.0)) throw SchemaError("allocation: fractions must be positive");
    denom += fractions[h] * stratum_sizes[h];
  }
  std::uint64_t available = 0;
  for (std::uint32_t s : stratum_sizes) available += s;
  if (n == 0 || n > available) {
    throw SchemaError("allocation: n = " + std::to_string(n) + " outside [1, " +
                      std::to_string(available) + "]");
  }

  std::vector<std::uint32_t> alloc(H, 0);
  std::vector<double> remainder(H, 0.0);
  std::uint32_t assigned = 0;
  for (std::size_t h = 0; h < H; ++h) {
    double target = n * fractions[h] * stratum_sizes[h] / denom;
    double fl = std::floor(target);
    alloc[h] = std::min<std::uint32_t>(static_cast<std::uint32_t>(fl), stratum_sizes[h]);
    remainder[h] = target - fl;
    assigned += alloc[h];
  }
  std::vector<std::size_t> order(H);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return remainder[a] > remainder[b]; });
  while (assigned < n) {
    bool placed = false;
    for (std::size_t h : order) {
      if (alloc[h] < stratum_sizes[h]) {
        ++alloc[h];
        ++assigned;
        placed = true;
        if (assigned == n) break;
      }
    }
    if (!placed) throw SchemaError("allocation: strata cannot absorb n");
  }
  for (std::size_t h = 0; h < H; ++h) {
    if (stratum_sizes[h] > 0 && alloc[h] == 0) {
      throw SchemaError("allocation: stratum " + std::to_string(h) +
                        " would get zero units; raise n or its fraction");
    }
  }
  return alloc;
}

SurveyDataset draw_sample(const SimulatedPopulation& pop, const DesignSpec& spec,
                          std::uint64_t seed) {
  const std::size_t N = pop.size();

  if (const auto* srs = std::get_if<SrsDesign>(&spec)) {
    if (srs->n == 0 || srs->n > N) {
      throw SchemaError("srs: n = " + std::to_string(srs->n) + " outside [1, " +
                        std::to_string(N) + "]");
    }
    Rng rng = Rng::derive(seed, kDesignStream);
    std::vector<std::uint32_t> rows = sample_indices(N, srs->n, rng);
    const double w = static_cast<double>(N) / static_cast<double>(srs->n);
    return dataset_from_rows(pop, rows, std::vector<double>(rows.size(), w), nullptr);
  }

  if (const auto* cd = std::get_if<ClusterDesign>(&spec)) {
    const std::uint32_t C = pop.config.clusters;
    if (cd->clusters == 0 || cd->clusters > C) {
      throw SchemaError("cluster design: clusters = " + std::to_string(cd->clusters) +
                        " outside [1, " + std::to_string(C) + "]");
    }
    Rng rng = Rng::derive(seed, kDesignStream);
    std::vector<std::uint32_t> picked = sample_indices(C, cd->clusters, rng);
    std::vector<bool> in(C, false);
    for (std::uint32_t c : picked) in[c] = true;
    std::vector<std::uint32_t> rows;
    for (std::size_t i = 0; i < N; ++i) {
      if (in[pop.cluster[i]]) rows.push_back(static_cast<std::uint32_t>(i));
    }
    const double w = static_cast<double>(C) / static_cast<double>(cd->clusters);
    return dataset_from_rows(pop, rows, std::vector<double>(rows.size(), w), nullptr);
  }

  const auto& st = std::get<StratifiedDesign>(spec);
  const std::size_t H = stratum_count(st.rule);

  std::vector<std::uint32_t> assignment = strata_assignment(pop, st.rule);
  std::vector<std::uint32_t> sizes(H, 0);
  for (std::uint32_t s : assignment) ++sizes[s];

  std::vector<std::uint32_t> alloc;
  if (!st.sizes.empty()) {
    if (st.sizes.size() != H) {
      throw SchemaError("stratified: " + std::to_string(st.sizes.size()) + " sizes for " +
                        std::to_string(H) + " strata");
    }
    for (std::size_t h = 0; h < H; ++h) {
      if (st.sizes[h] == 0 || st.sizes[h] > sizes[h]) {
        throw SchemaError("stratified: size " + std::to_string(st.sizes[h]) + " for stratum " +
                          std::to_string(h) + " outside [1, " + std::to_string(sizes[h]) + "]");
      }
    }
    alloc.assign(st.sizes.begin(), st.sizes.end());
  } else {
    std::vector<double> fractions = st.fractions;
    if (fractions.empty()) fractions.assign(H, 1.0);
    alloc = allocate_largest_remainder(sizes, fractions, st.n);
  }

  std::vector<std::vector<std::uint32_t>> members(H);
  for (std::size_t h = 0; h < H; ++h) members[h].reserve(sizes[h]);
  for (std::size_t i = 0; i < N; ++i) {
    members[assignment[i]].push_back(static_cast<std::uint32_t>(i));
  }

  const std::vector<std::string> names = stratum_names(st.rule);
  std::vector<std::uint32_t> rows;
  std::vector<double> weights;
  std::vector<std::string> strata;
  rows.reserve(std::accumulate(alloc.begin(), alloc.end(), std::size_t{0}));
  for (std::size_t h = 0; h < H; ++h) {
    if (alloc[h] == 0) continue;
    Rng rng = Rng::derive(seed, kDesignStream, h);
    std::vector<std::uint32_t> local = sample_indices(members[h].size(), alloc[h], rng);
    const double w = static_cast<double>(sizes[h]) / static_cast<double>(alloc[h]);
    for (std::uint32_t k : local) {
      rows.push_back(members[h][k]);
      weights.push_back(w);
      strata.push_back(names[h]);
    }
  }
  // back to population order, carrying weight and stratum along
  std::vector<std::size_t> order(rows.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return rows[a] < rows[b]; });
  std::vector<std::uint32_t> rows2(rows.size());
  std::vector<double> weights2(rows.size());
  std::vector<std::string> strata2(rows.size());
  for (std::size_t k = 0; k < rows.size(); ++k) {
    rows2[k] = rows[order[k]];
    weights2[k] = weights[order[k]];
    strata2[k] = strata[order[k]];
  }
  return dataset_from_rows(pop, rows2, weights2, &strata2);
}

}  // namespace svyperm
