#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "svyperm/designs.hpp"
#include "svyperm/errors.hpp"
#include "svyperm/simpop.hpp"

using namespace svyperm;

namespace {

SimulatedPopulation small_population(std::uint64_t seed, LabelScheme labels = LabelScheme::B) {
  PopulationConfig cfg;
  cfg.clusters = 25;
  cfg.cluster_size = 20;
  cfg.labels = labels;
  cfg.seed = seed;
  return generate_population(cfg);
}

double ht_total(const SurveyDataset& d) {
  double t = 0.0;
  for (std::size_t i = 0; i < d.n(); ++i) t += d.w()[i] * d.y()[i];
  return t;
}

double population_total(const SimulatedPopulation& pop) {
  double t = 0.0;
  for (double v : pop.y) t += v;
  return t;
}

}  // namespace

TEST_CASE("assign_quartiles splits 1..8 evenly") {
  std::vector<double> v = {5.0, 1.0, 7.0, 3.0, 8.0, 2.0, 6.0, 4.0};
  std::vector<std::uint32_t> q = assign_quartiles(v);
  // boundaries are the 2nd, 4th and 6th smallest: 2, 4, 6
  CHECK(q == std::vector<std::uint32_t>{2, 0, 3, 1, 3, 0, 2, 1});
}

TEST_CASE("assign_quartiles sends boundary ties to the lower stratum") {
  std::vector<double> v = {1.0, 1.0, 1.0, 1.0, 2.0, 2.0, 2.0, 2.0};
  std::vector<std::uint32_t> q = assign_quartiles(v);
  // boundaries (1, 1, 2): all ones fall at or below the first boundary,
  // all twos sit above the second but at the third
  CHECK(q == std::vector<std::uint32_t>{0, 0, 0, 0, 2, 2, 2, 2});
}

TEST_CASE("assign_quartiles is invariant under increasing transforms") {
  SimulatedPopulation pop = small_population(3);
  std::vector<double> eta(pop.size());
  for (std::size_t i = 0; i < pop.size(); ++i) {
    eta[i] = pop.true_nu[pop.cluster[i]] + pop.true_eps[i];
  }
  std::vector<double> scaled(eta.size());
  for (std::size_t i = 0; i < eta.size(); ++i) scaled[i] = 2.0 * eta[i] + 3.0;
  CHECK(assign_quartiles(eta) == assign_quartiles(scaled));
}

TEST_CASE("strata_assignment composes quartiles and labels") {
  SimulatedPopulation pop = small_population(5, LabelScheme::A);
  std::vector<std::uint32_t> by_label = strata_assignment(pop, StrataRule::group_label);
  for (std::size_t i = 0; i < pop.size(); ++i) CHECK(by_label[i] == pop.g[i]);

  std::vector<std::uint32_t> quart = strata_assignment(pop, StrataRule::eta_quartiles);
  std::vector<std::uint32_t> crossed =
      strata_assignment(pop, StrataRule::eta_quartiles_by_group_label);
  for (std::size_t i = 0; i < pop.size(); ++i) {
    CHECK(crossed[i] == quart[i] * 2 + pop.g[i]);
  }

  // quartiles of a 500-unit population are exact quarters
  std::vector<std::size_t> counts(4, 0);
  for (std::uint32_t s : quart) ++counts[s];
  for (std::size_t k = 0; k < 4; ++k) CHECK(counts[k] == 125);
}

TEST_CASE("largest-remainder allocation reproduces the informative split") {
  std::vector<std::uint32_t> sizes = {2500, 2500, 2500, 2500};
  std::vector<double> fractions = {1.0, 2.0, 3.0, 4.0};
  std::vector<std::uint32_t> alloc = allocate_largest_remainder(sizes, fractions, 60);
  CHECK(alloc == std::vector<std::uint32_t>{6, 12, 18, 24});
}

TEST_CASE("largest-remainder ties break in stratum order") {
  std::vector<std::uint32_t> sizes = {10, 10};
  std::vector<double> fractions = {1.0, 1.0};
  CHECK(allocate_largest_remainder(sizes, fractions, 5) ==
        std::vector<std::uint32_t>{3, 2});
  CHECK(allocate_largest_remainder(sizes, fractions, 4) ==
        std::vector<std::uint32_t>{2, 2});
}

TEST_CASE("allocation rejects infeasible requests") {
  std::vector<std::uint32_t> sizes = {10, 10};
  std::vector<double> even = {1.0, 1.0};
  CHECK_THROWS_AS(allocate_largest_remainder(sizes, even, 0), SchemaError);
  CHECK_THROWS_AS(allocate_largest_remainder(sizes, even, 21), SchemaError);

  std::vector<double> negative = {1.0, -1.0};
  CHECK_THROWS_AS(allocate_largest_remainder(sizes, negative, 5), SchemaError);

  std::vector<double> three = {1.0, 1.0, 1.0};
  CHECK_THROWS_AS(allocate_largest_remainder(sizes, three, 5), SchemaError);

  // a nonempty stratum squeezed to zero draws is refused
  std::vector<std::uint32_t> lopsided = {10, 100000};
  std::vector<double> steep = {1.0, 1000.0};
  CHECK_THROWS_AS(allocate_largest_remainder(lopsided, steep, 2), SchemaError);
}

TEST_CASE("srs draws n distinct rows with the inverse sampling fraction") {
  SimulatedPopulation pop = small_population(7);
  SurveyDataset d = draw_sample(pop, SrsDesign{50}, 1234);
  REQUIRE(d.n() == 50);
  for (std::size_t i = 0; i < d.n(); ++i) CHECK(d.w()[i] == 10.0);  // 500 / 50
  CHECK_FALSE(d.has_strata());

  // determinism and seed sensitivity
  SurveyDataset again = draw_sample(pop, SrsDesign{50}, 1234);
  CHECK(std::vector<double>(d.y().begin(), d.y().end()) ==
        std::vector<double>(again.y().begin(), again.y().end()));
  SurveyDataset other = draw_sample(pop, SrsDesign{50}, 1235);
  CHECK(std::vector<double>(d.y().begin(), d.y().end()) !=
        std::vector<double>(other.y().begin(), other.y().end()));

  CHECK_THROWS_AS(draw_sample(pop, SrsDesign{0}, 1), SchemaError);
  CHECK_THROWS_AS(draw_sample(pop, SrsDesign{501}, 1), SchemaError);
}

TEST_CASE("cluster design keeps whole clusters") {
  SimulatedPopulation pop = small_population(9);
  SurveyDataset d = draw_sample(pop, ClusterDesign{8}, 77);
  REQUIRE(d.n() == 160);  // 8 clusters of 20
  CHECK(d.cluster_count() == 8);
  for (std::size_t i = 0; i < d.n(); ++i) CHECK(d.w()[i] == 3.125);  // 25 / 8

  // every sampled cluster appears with its full membership
  std::map<std::uint32_t, std::size_t> sizes;
  for (std::size_t i = 0; i < d.n(); ++i) ++sizes[d.cluster()[i]];
  for (const auto& [c, count] : sizes) CHECK(count == 20);

  CHECK_THROWS_AS(draw_sample(pop, ClusterDesign{26}, 1), SchemaError);
}

TEST_CASE("stratified draw hits the allocated sizes with cellwise weights") {
  SimulatedPopulation pop = small_population(13);
  StratifiedDesign st;
  st.rule = StrataRule::eta_quartiles;
  st.fractions = {1.0, 2.0, 3.0, 4.0};
  st.n = 60;
  SurveyDataset d = draw_sample(pop, st, 99);
  REQUIRE(d.n() == 60);
  REQUIRE(d.has_strata());

  // per-stratum counts (6, 12, 18, 24) on 125-unit strata
  std::map<std::string, std::size_t> counts;
  std::map<std::string, std::set<double>> weights;
  for (std::size_t i = 0; i < d.n(); ++i) {
    const std::string& name = d.stratum_names()[d.stratum()[i]];
    ++counts[name];
    weights[name].insert(d.w()[i]);
  }
  CHECK(counts["q1"] == 6);
  CHECK(counts["q2"] == 12);
  CHECK(counts["q3"] == 18);
  CHECK(counts["q4"] == 24);
  CHECK(weights["q1"] == std::set<double>{125.0 / 6.0});
  CHECK(weights["q4"] == std::set<double>{125.0 / 24.0});
}

TEST_CASE("explicit stratum sizes draw the same sample as equivalent fractions") {
  SimulatedPopulation pop = small_population(13);
  StratifiedDesign by_fraction;
  by_fraction.rule = StrataRule::eta_quartiles;
  by_fraction.fractions = {1.0, 2.0, 3.0, 4.0};
  by_fraction.n = 60;

  StratifiedDesign by_size;
  by_size.rule = StrataRule::eta_quartiles;
  by_size.sizes = {6, 12, 18, 24};

  SurveyDataset a = draw_sample(pop, by_fraction, 31);
  SurveyDataset b = draw_sample(pop, by_size, 31);
  CHECK(std::vector<double>(a.y().begin(), a.y().end()) ==
        std::vector<double>(b.y().begin(), b.y().end()));
  CHECK(std::vector<double>(a.w().begin(), a.w().end()) ==
        std::vector<double>(b.w().begin(), b.w().end()));

  StratifiedDesign bad = by_size;
  bad.sizes = {6, 12, 18};
  CHECK_THROWS_AS(draw_sample(pop, bad, 31), SchemaError);
  bad.sizes = {6, 12, 18, 1000};
  CHECK_THROWS_AS(draw_sample(pop, bad, 31), SchemaError);
}

TEST_CASE("stratified rows come back in population order") {
  SimulatedPopulation pop = small_population(17);
  StratifiedDesign st;
  st.rule = StrataRule::group_label;
  st.n = 40;
  SurveyDataset d = draw_sample(pop, st, 5);

  // reconstruct each sampled row's population index through y values,
  // which are almost surely unique
  std::map<double, std::size_t> index_of;
  for (std::size_t i = 0; i < pop.size(); ++i) index_of[pop.y[i]] = i;
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < d.n(); ++i) rows.push_back(index_of.at(d.y()[i]));
  CHECK(std::is_sorted(rows.begin(), rows.end()));
}

TEST_CASE("every design yields design-unbiased totals") {
  SimulatedPopulation pop = small_population(23, LabelScheme::A);
  const double total = population_total(pop);
  const int draws = 2000;

  auto run = [&](const DesignSpec& spec) {
    double sum = 0.0, sumsq = 0.0;
    for (int s = 0; s < draws; ++s) {
      double t = ht_total(draw_sample(pop, spec, 10000 + s));
      sum += t;
      sumsq += t * t;
    }
    double mean = sum / draws;
    double sd = std::sqrt(sumsq / draws - mean * mean);
    double se = sd / std::sqrt(static_cast<double>(draws));
    CAPTURE(design_kind(spec));
    CHECK(std::fabs(mean - total) <= 3.0 * se + 1e-9);
  };

  run(SrsDesign{50});
  run(ClusterDesign{6});
  StratifiedDesign st;
  st.rule = StrataRule::eta_quartiles;
  st.fractions = {1.0, 2.0, 3.0, 4.0};
  st.n = 60;
  run(st);
  StratifiedDesign crossed;
  crossed.rule = StrataRule::eta_quartiles_by_group_label;
  crossed.n = 80;
  run(crossed);
}

TEST_CASE("design kind and rule names") {
  CHECK(std::string(design_kind(SrsDesign{5})) == "srs");
  CHECK(std::string(design_kind(ClusterDesign{5})) == "cluster");
  CHECK(std::string(design_kind(StratifiedDesign{})) == "stratified");
  CHECK(parse_strata_rule("eta_quartiles") == StrataRule::eta_quartiles);
  CHECK(parse_strata_rule("group_label") == StrataRule::group_label);
  CHECK_FALSE(parse_strata_rule("zip_code").has_value());
  CHECK(stratum_count(StrataRule::eta_quartiles_by_group_label) == 8);
  CHECK(stratum_names(StrataRule::group_label) ==
        std::vector<std::string>{"g0", "g1"});
}
