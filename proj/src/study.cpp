#include "svyperm/study.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <stdexcept>

#include <json.hpp>

#include "svyperm/decomposer.hpp"
#include "svyperm/detail/parallel.hpp"
#include "svyperm/errors.hpp"
#include "svyperm/estimator.hpp"
#include "svyperm/rng.hpp"

namespace svyperm {

namespace {

constexpr std::uint64_t kReplicateStream = 0x72657073ull;  // "reps"

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

nlohmann::ordered_json design_json(const DesignSpec& spec) {
  nlohmann::ordered_json j;
  j["kind"] = design_kind(spec);
  if (const auto* srs = std::get_if<SrsDesign>(&spec)) {
    j["n"] = srs->n;
  } else if (const auto* cd = std::get_if<ClusterDesign>(&spec)) {
    j["clusters"] = cd->clusters;
  } else {
    const auto& st = std::get<StratifiedDesign>(spec);
    j["rule"] = to_string(st.rule);
    if (!st.sizes.empty()) {
      j["sizes"] = st.sizes;
    } else {
      j["fractions"] = st.fractions;
      j["n"] = st.n;
    }
  }
  return j;
}

}  // namespace

std::uint64_t replicate_seed(std::uint64_t master_seed, std::uint64_t replicate) {
  return Rng::mix(Rng::mix(master_seed, kReplicateStream), replicate);
}

std::uint64_t permutation_seed(std::uint64_t rep_seed, TestMode mode) {
  return Rng::mix(rep_seed, static_cast<std::uint64_t>(mode) + 1);
}

StudyResult run_study(const StudyConfig& cfg) {
  if (cfg.replicates == 0) throw SchemaError("study: replicates must be at least 1");
  if (!cfg.run_pseudo && !cfg.run_naive) throw SchemaError("study: no test mode enabled");
  if (cfg.alphas.empty()) throw SchemaError("study: alpha grid is empty");
  for (std::size_t k = 0; k < cfg.alphas.size(); ++k) {
    if (!(cfg.alphas[k] > 0.0 && cfg.alphas[k] < 1.0)) {
      throw SchemaError("study: alphas must lie in (0, 1)");
    }
    if (k > 0 && !(cfg.alphas[k] > cfg.alphas[k - 1])) {
      throw SchemaError("study: alphas must be strictly increasing");
    }
  }

  const SimulatedPopulation pop = generate_population(cfg.population);

  StudyResult result;
  result.alphas = cfg.alphas;
  result.replicates.assign(cfg.replicates, {});

  detail::parallel_for(cfg.replicates, cfg.threads, [&](std::uint64_t r) {
    const std::uint64_t rep_seed = replicate_seed(cfg.seed, r);
    try {
      SurveyDataset sample = draw_sample(pop, cfg.design, rep_seed);
      FittedLinearModel model = fit_wls(sample);
      ClusterDecomposition dec = decompose(sample, model.residuals);

      TestOptions opt;
      opt.convention = cfg.convention;
      StudyReplicate& slot = result.replicates[r];
      slot.p_pseudo = std::numeric_limits<double>::quiet_NaN();
      slot.p_naive = std::numeric_limits<double>::quiet_NaN();
      bool have_psi = false;
      if (cfg.run_pseudo) {
        PermutationTestResult t = run_test(dec, TestMode::pseudo_cluster, cfg.m,
                                           permutation_seed(rep_seed, TestMode::pseudo_cluster),
                                           opt);
        slot.p_pseudo = t.p_value;
        slot.psi_observed = t.psi_observed;
        have_psi = true;
      }
      if (cfg.run_naive) {
        PermutationTestResult t = run_test(dec, TestMode::naive_global, cfg.m,
                                           permutation_seed(rep_seed, TestMode::naive_global),
                                           opt);
        slot.p_naive = t.p_value;
        if (have_psi && t.psi_observed != slot.psi_observed) {
          throw NumericalError("psi_observed differs between modes");
        }
        slot.psi_observed = t.psi_observed;
      }
    } catch (const NumericalError& e) {
      throw NumericalError("replicate " + std::to_string(r) + ": " + e.what());
    } catch (const SchemaError& e) {
      throw SchemaError("replicate " + std::to_string(r) + ": " + e.what());
    } catch (const std::exception& e) {
      throw std::runtime_error("replicate " + std::to_string(r) + ": " + e.what());
    }
  });

  std::vector<double> psi(cfg.replicates);
  for (std::size_t r = 0; r < cfg.replicates; ++r) psi[r] = result.replicates[r].psi_observed;
  result.empirical_curve = empirical_pvalues(psi);

  auto rates_for = [&](double StudyReplicate::*member) {
    std::vector<double> p(cfg.replicates);
    for (std::size_t r = 0; r < cfg.replicates; ++r) p[r] = result.replicates[r].*member;
    std::vector<double> rates;
    rates.reserve(cfg.alphas.size());
    for (double alpha : cfg.alphas) rates.push_back(rejection_rate(p, alpha));
    return rates;
  };
  if (cfg.run_pseudo) result.pseudo_rejection = rates_for(&StudyReplicate::p_pseudo);
  if (cfg.run_naive) result.naive_rejection = rates_for(&StudyReplicate::p_naive);
  return result;
}

std::vector<std::pair<double, double>> empirical_pvalues(std::span<const double> psi) {
  const std::size_t R = psi.size();
  if (R == 0) throw SchemaError("empirical_pvalues: no statistics given");
  std::vector<double> sorted_abs(R);
  for (std::size_t i = 0; i < R; ++i) sorted_abs[i] = std::fabs(psi[i]);
  std::sort(sorted_abs.begin(), sorted_abs.end());
  std::vector<std::pair<double, double>> out(R);
  for (std::size_t i = 0; i < R; ++i) {
    // count of |psi_j| >= |psi_i|, ties included
    auto it = std::lower_bound(sorted_abs.begin(), sorted_abs.end(), std::fabs(psi[i]));
    out[i] = {psi[i], static_cast<double>(sorted_abs.end() - it) / static_cast<double>(R)};
  }
  std::sort(out.begin(), out.end());
  return out;
}

double rejection_rate(std::span<const double> p, double alpha) {
  if (p.empty()) return 0.0;
  std::size_t count = 0;
  for (double v : p) count += (v <= alpha);
  return static_cast<double>(count) / static_cast<double>(p.size());
}

void export_study(const StudyConfig& cfg, const StudyResult& result,
                  const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);

  {
    std::ofstream out(dir / "per_replicate.csv", std::ios::binary);
    if (!out) throw SchemaError("cannot write " + (dir / "per_replicate.csv").string());
    out << "replicate,psi_observed";
    if (cfg.run_pseudo) out << ",p_pseudo";
    if (cfg.run_naive) out << ",p_naive";
    out << '\n';
    for (std::size_t r = 0; r < result.replicates.size(); ++r) {
      const StudyReplicate& rep = result.replicates[r];
      out << r << ',' << fmt(rep.psi_observed);
      if (cfg.run_pseudo) out << ',' << fmt(rep.p_pseudo);
      if (cfg.run_naive) out << ',' << fmt(rep.p_naive);
      out << '\n';
    }
  }

  {
    // replicates sorted by psi line up with the (already sorted) curve
    std::vector<std::size_t> order(result.replicates.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return result.replicates[a].psi_observed < result.replicates[b].psi_observed;
    });
    std::ofstream out(dir / "curves.csv", std::ios::binary);
    if (!out) throw SchemaError("cannot write " + (dir / "curves.csv").string());
    out << "psi,p_empirical";
    if (cfg.run_pseudo) out << ",p_pseudo";
    if (cfg.run_naive) out << ",p_naive";
    out << '\n';
    for (std::size_t k = 0; k < order.size(); ++k) {
      out << fmt(result.empirical_curve[k].first) << ',' << fmt(result.empirical_curve[k].second);
      if (cfg.run_pseudo) out << ',' << fmt(result.replicates[order[k]].p_pseudo);
      if (cfg.run_naive) out << ',' << fmt(result.replicates[order[k]].p_naive);
      out << '\n';
    }
  }

  {
    std::ofstream out(dir / "rates.csv", std::ios::binary);
    if (!out) throw SchemaError("cannot write " + (dir / "rates.csv").string());
    out << "mode,alpha,rejection_rate\n";
    for (std::size_t k = 0; k < result.alphas.size(); ++k) {
      if (cfg.run_pseudo) {
        out << "pseudo_cluster," << fmt(result.alphas[k]) << ',' << fmt(result.pseudo_rejection[k])
            << '\n';
      }
    }
    for (std::size_t k = 0; k < result.alphas.size(); ++k) {
      if (cfg.run_naive) {
        out << "naive_global," << fmt(result.alphas[k]) << ',' << fmt(result.naive_rejection[k])
            << '\n';
      }
    }
  }

  {
    std::ofstream out(dir / "manifest.json", std::ios::binary);
    if (!out) throw SchemaError("cannot write " + (dir / "manifest.json").string());
    StudyConfig as_run = cfg;
    as_run.output_dir = dir.string();
    out << manifest_json(as_run) << '\n';
  }
}

std::string manifest_json(const StudyConfig& cfg) {
  nlohmann::ordered_json j;
  j["population"] = {
      {"clusters", cfg.population.clusters},
      {"cluster_size", cfg.population.cluster_size},
      {"sigma_nu", cfg.population.sigma_nu},
      {"sigma_eps", cfg.population.sigma_eps},
      {"delta", cfg.population.delta},
      {"labels", to_string(cfg.population.labels)},
      {"seed", cfg.population.seed},
  };
  j["design"] = design_json(cfg.design);
  j["test"] = {
      {"replicates", cfg.replicates},
      {"m", cfg.m},
      {"modes", [&] {
         std::vector<std::string> modes;
         if (cfg.run_pseudo) modes.emplace_back("pseudo_cluster");
         if (cfg.run_naive) modes.emplace_back("naive_global");
         return modes;
       }()},
      {"convention", to_string(cfg.convention)},
      {"alphas", cfg.alphas},
      {"seed", cfg.seed},
      {"threads", cfg.threads},
  };
  j["output"] = {{"dir", cfg.output_dir}};
  return j.dump(2);
}

}  // namespace svyperm
