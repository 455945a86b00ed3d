#include "svyperm/simpop.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

#include "svyperm/errors.hpp"
#include "svyperm/rng.hpp"

namespace svyperm {

namespace {
constexpr std::uint64_t kClusterStream = 0x636C7573ull;  // "clus"
}

const char* to_string(LabelScheme s) {
  switch (s) {
    case LabelScheme::A: return "A";
    case LabelScheme::B: return "B";
    case LabelScheme::C: return "C";
  }
  return "?";
}

std::optional<LabelScheme> parse_label_scheme(std::string_view s) {
  if (s == "A" || s == "a") return LabelScheme::A;
  if (s == "B" || s == "b") return LabelScheme::B;
  if (s == "C" || s == "c") return LabelScheme::C;
  return std::nullopt;
}

double sigma_eta(const PopulationConfig& cfg) {
  return std::sqrt(cfg.sigma_nu * cfg.sigma_nu + cfg.sigma_eps * cfg.sigma_eps);
}

double mu_of_label(double delta, std::uint8_t g) { return delta * g - delta / 2.0; }

SimulatedPopulation generate_population(const PopulationConfig& cfg) {
  if (cfg.clusters == 0 || cfg.cluster_size == 0) {
    throw SchemaError("generate_population: clusters and cluster_size must be positive");
  }
  if (!(cfg.sigma_nu >= 0.0) || !(cfg.sigma_eps >= 0.0)) {
    throw SchemaError("generate_population: sigma_nu and sigma_eps must be nonnegative");
  }

  SimulatedPopulation pop;
  pop.config = cfg;
  const std::size_t N = static_cast<std::size_t>(cfg.clusters) * cfg.cluster_size;
  pop.y.reserve(N);
  pop.g.reserve(N);
  pop.cluster.reserve(N);
  pop.true_eps.reserve(N);
  pop.true_nu.reserve(cfg.clusters);

  for (std::uint32_t i = 0; i < cfg.clusters; ++i) {
    Rng rng = Rng::derive(cfg.seed, kClusterStream, i);
    const double nu = rng.normal(0.0, cfg.sigma_nu);
    pop.true_nu.push_back(nu);

    double rate = 0.5;
    std::uint8_t cluster_label = 0;
    if (cfg.labels == LabelScheme::B) rate = rng.next_double();
    if (cfg.labels == LabelScheme::C) cluster_label = rng.bernoulli(0.5) ? 1 : 0;

    for (std::uint32_t j = 0; j < cfg.cluster_size; ++j) {
      std::uint8_t g;
      switch (cfg.labels) {
        case LabelScheme::A: g = rng.bernoulli(0.5) ? 1 : 0; break;
        case LabelScheme::B: g = rng.bernoulli(rate) ? 1 : 0; break;
        default: g = cluster_label; break;
      }
      const double eps = rng.normal(0.0, cfg.sigma_eps);
      pop.g.push_back(g);
      pop.cluster.push_back(i);
      pop.true_eps.push_back(eps);
      pop.y.push_back(mu_of_label(cfg.delta, g) + nu + eps);
    }
  }
  return pop;
}

SurveyDataset census_dataset(const SimulatedPopulation& pop) {
  const std::size_t N = pop.size();
  std::vector<double> y(pop.y);
  std::vector<std::uint8_t> g(pop.g);
  std::vector<double> w(N, 1.0);
  std::vector<std::string> cluster(N);
  for (std::size_t i = 0; i < N; ++i) cluster[i] = std::to_string(pop.cluster[i]);
  return SurveyDataset::from_columns(std::move(y), std::move(g), std::move(w),
                                     std::move(cluster));
}

void write_population_csv(const SimulatedPopulation& pop, const std::filesystem::path& path) {
  write_csv(census_dataset(pop), path);
}

void write_effects_csv(const SimulatedPopulation& pop, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw SchemaError("cannot write " + path.string());
  out << "row,cluster,true_nu,true_eps\n";
  char buf[80];
  for (std::size_t i = 0; i < pop.size(); ++i) {
    std::snprintf(buf, sizeof(buf), "%zu,%u,%.17g,%.17g\n", i, pop.cluster[i],
                  pop.true_nu[pop.cluster[i]], pop.true_eps[i]);
    out << buf;
  }
  if (!out) throw SchemaError("write failed: " + path.string());
}

}  // namespace svyperm
