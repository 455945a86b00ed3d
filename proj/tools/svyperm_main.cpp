// svyperm: design-adjusted permutation tests for weighted cluster samples.
// Machine-readable JSON goes to stdout, human-readable summaries and
// diagnostics to stderr, so outputs pipe cleanly.

#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <iostream>
#include <limits>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "svyperm/dataset.hpp"
#include "svyperm/decomposer.hpp"
#include "svyperm/designs.hpp"
#include "svyperm/errors.hpp"
#include "svyperm/estimator.hpp"
#include "svyperm/kernels.hpp"
#include "svyperm/permtest.hpp"
#include "svyperm/rng.hpp"
#include "svyperm/simpop.hpp"
#include "svyperm/study.hpp"

namespace {

using nlohmann::ordered_json;
using namespace svyperm;

struct GlobalOptions {
  std::uint64_t seed = 1;
  bool seed_given = false;  // --seed flag or SVYPERM_SEED env
  unsigned threads = 1;
  bool threads_given = false;
  std::string kernels = "";
};

std::uint64_t parse_env_seed(const char* text) {
  std::string s(text);
  std::uint64_t v = 0;
  std::size_t pos = 0;
  try {
    v = std::stoull(s, &pos);
  } catch (const std::exception&) {
    throw SchemaError("SVYPERM_SEED: not a nonnegative integer: '" + s + "'");
  }
  if (pos != s.size()) throw SchemaError("SVYPERM_SEED: trailing characters in '" + s + "'");
  return v;
}

void emit(const ordered_json& j) { std::cout << j.dump(2) << "\n"; }

ordered_json finding_json(const Finding& f) {
  ordered_json j;
  j["code"] = f.code;
  j["message"] = f.message;
  j["rows"] = f.rows;
  return j;
}

ordered_json result_json(const PermutationTestResult& r) {
  ordered_json j;
  j["mode"] = to_string(r.mode);
  j["psi_observed"] = r.psi_observed;
  j["p_value"] = r.p_value;
  j["m"] = r.m;
  j["seed"] = r.seed;
  j["psi_permuted"] = r.psi_permuted;
  return j;
}

struct SchemaFlags {
  std::string y = "y";
  std::string g = "g";
  std::string w = "w";
  std::string cluster = "cluster";
  std::string stratum;
  std::vector<std::string> covariates;

  ColumnSchema to_schema() const {
    ColumnSchema s;
    s.y = y;
    s.g = g;
    s.w = w;
    s.cluster = cluster;
    s.stratum = stratum;
    s.covariates = covariates;
    return s;
  }

  void attach(CLI::App* cmd) {
    cmd->add_option("--y", y, "outcome column")->capture_default_str();
    cmd->add_option("--g", g, "group label column (0/1)")->capture_default_str();
    cmd->add_option("--w", w, "sampling weight column")->capture_default_str();
    cmd->add_option("--cluster", cluster, "cluster id column")->capture_default_str();
    cmd->add_option("--stratum", stratum, "stratum column (optional)");
    cmd->add_option("--covariates", covariates, "covariate columns")->delimiter(',');
  }
};

void print_kv(const ordered_json& diagnostics) {
  for (auto it = diagnostics.begin(); it != diagnostics.end(); ++it) {
    if (it->is_string()) {
      std::fprintf(stderr, "%s = %s\n", it.key().c_str(), it->get<std::string>().c_str());
    } else {
      std::fprintf(stderr, "%s = %s\n", it.key().c_str(), it->dump().c_str());
    }
  }
}

ordered_json dataset_diagnostics(const SurveyDataset& d, const ClusterDecomposition& dec,
                                 const FittedLinearModel& model) {
  ConditionDiagnostics cd = diagnostics(dec);
  std::size_t g1 = 0;
  for (std::uint8_t g : d.g()) g1 += g;
  ordered_json j;
  j["n"] = d.n();
  j["clusters"] = d.cluster_count();
  j["columns"] = d.p();
  j["g1_count"] = g1;
  j["gram_condition"] = model.gram_condition;
  {
    std::vector<double> moments = residual_orthogonality(model, d);
    std::vector<double> tol = orthogonality_tolerances(d);
    double worst = 0.0;
    for (std::size_t k = 0; k < moments.size(); ++k) {
      if (tol[k] > 0.0) worst = std::max(worst, std::fabs(moments[k]) / tol[k]);
    }
    j["orthogonality_ratio"] = worst;
  }
  j["max_group_count_gap"] = cd.max_group_count_gap;
  j["cluster_size_ratio_indicator"] = cd.cluster_size_ratio_indicator;
  j["second_moment_bound"] = cd.second_moment_bound;
  j["kernels"] = kernels::active().name;
  return j;
}

int cmd_test(const GlobalOptions& global, const std::string& csv_path, const SchemaFlags& schema,
             const std::string& mode_name, std::uint64_t m, std::uint64_t cap, bool center,
             const std::string& convention_name, const std::string& sided_name) {
  auto mode = parse_test_mode(mode_name);
  if (!mode) throw SchemaError("unknown mode '" + mode_name + "'");
  TestOptions opt;
  if (auto c = parse_p_convention(convention_name)) opt.convention = *c;
  else throw SchemaError("unknown convention '" + convention_name + "'");
  if (auto s = parse_sidedness(sided_name)) opt.sidedness = *s;
  else throw SchemaError("unknown sidedness '" + sided_name + "'");
  opt.threads = global.threads;

  SurveyDataset d = load_csv(csv_path, schema.to_schema());
  ValidationReport report = validate(d);
  if (!report.ok) {
    std::string msg = csv_path + ": dataset fails validation:";
    for (const Finding& f : report.issues) msg += "\n  " + f.code + ": " + f.message;
    throw SchemaError(msg);
  }

  double subtracted_mean = 0.0;
  if (center) {
    subtracted_mean = weighted_mean_y(d);
    d = center_weighted(d);
  }

  ordered_json out;
  out["command"] = "test";
  out["seed"] = global.seed;

  PermutationTestResult result;
  ordered_json diag;
  if (*mode == TestMode::iid_mean_diff) {
    // baseline path: weights and clusters are deliberately ignored
    result = iid_mean_diff_test(d.y(), d.g(), m, global.seed, opt);
    std::size_t g1 = 0;
    for (std::uint8_t g : d.g()) g1 += g;
    diag["n"] = d.n();
    diag["g1_count"] = g1;
    diag["kernels"] = kernels::active().name;
  } else {
    FittedLinearModel model = fit_wls(d);
    ClusterDecomposition dec = decompose(d, model.residuals);
    if (*mode == TestMode::exact_cluster) {
      result = exact_test(dec, cap, opt);
    } else {
      result = run_test(dec, *mode, m, global.seed, opt);
    }
    diag = dataset_diagnostics(d, dec, model);
  }
  if (center) diag["weighted_mean_y"] = subtracted_mean;

  out["result"] = result_json(result);
  out["diagnostics"] = diag;
  emit(out);

  std::fprintf(stderr, "%s: p = %.6g (psi_observed = %.6g, m = %" PRIu64 ", seed = %" PRIu64 ")\n",
               to_string(result.mode), result.p_value, result.psi_observed, result.m, global.seed);
  print_kv(diag);
  return 0;
}

int cmd_simulate(const GlobalOptions& global, PopulationConfig cfg, const std::string& delta_mode,
                 const std::string& out_path, std::string effects_path) {
  cfg.seed = global.seed;
  if (delta_mode == "sigma-eta") {
    cfg.delta = sigma_eta(cfg);
  } else if (delta_mode != "fixed") {
    std::fprintf(stderr, "error: --delta-mode expects fixed or sigma-eta, got '%s'\n",
                 delta_mode.c_str());
    return 1;
  }
  SimulatedPopulation pop = generate_population(cfg);
  write_population_csv(pop, out_path);
  if (effects_path.empty()) effects_path = out_path + ".effects.csv";
  write_effects_csv(pop, effects_path);

  double sum1 = 0.0, sum0 = 0.0;
  std::size_t n1 = 0;
  for (std::size_t i = 0; i < pop.size(); ++i) {
    if (pop.g[i]) {
      sum1 += pop.y[i];
      ++n1;
    } else {
      sum0 += pop.y[i];
    }
  }
  const std::size_t n0 = pop.size() - n1;
  const double gap = (n1 && n0) ? sum1 / static_cast<double>(n1) - sum0 / static_cast<double>(n0)
                                : std::numeric_limits<double>::quiet_NaN();

  ordered_json out;
  out["command"] = "simulate";
  out["seed"] = global.seed;
  out["n"] = pop.size();
  out["clusters"] = cfg.clusters;
  out["cluster_size"] = cfg.cluster_size;
  out["labels"] = to_string(cfg.labels);
  out["delta"] = cfg.delta;
  out["sigma_eta"] = sigma_eta(cfg);
  out["group_mean_gap"] = gap;
  out["g1_count"] = n1;
  out["population_csv"] = out_path;
  out["effects_csv"] = effects_path;
  emit(out);

  std::fprintf(stderr,
               "simulated %zu units in %u clusters (labels %s, delta = %.6g, sigma_eta = %.6g, "
               "group_mean_gap = %.6g, seed = %" PRIu64 ")\n",
               pop.size(), cfg.clusters, to_string(cfg.labels), cfg.delta, sigma_eta(cfg), gap,
               global.seed);
  std::fprintf(stderr, "population_csv = %s\neffects_csv = %s\n", out_path.c_str(),
               effects_path.c_str());
  return 0;
}

void print_gnuplot_hints(const std::string& out_dir) {
  std::fprintf(stderr,
               "# gnuplot recipe for the exported study files\n"
               "# set datafile separator ','\n"
               "# set key autotitle columnhead\n"
               "# plot '%s/curves.csv' using 1:2 with lines title 'empirical', \\\n"
               "#      '%s/curves.csv' using 1:3 with points title 'pseudo', \\\n"
               "#      '%s/curves.csv' using 1:4 with points title 'naive'\n"
               "# # rejection rates:\n"
               "# plot '%s/rates.csv' every ::1 using 2:3 with points\n",
               out_dir.c_str(), out_dir.c_str(), out_dir.c_str(), out_dir.c_str());
}

int cmd_study(const GlobalOptions& global, const std::string& config_path, std::string out_dir,
              bool gnuplot_hints) {
  StudyConfig cfg = load_study_config(config_path);
  if (global.seed_given) {
    cfg.seed = global.seed;
    cfg.population.seed = Rng::mix(cfg.seed, 0x706F7075ull);
  }
  if (global.threads_given) cfg.threads = global.threads;
  if (out_dir.empty()) out_dir = cfg.output_dir;
  if (out_dir.empty()) {
    std::fprintf(stderr, "error: no output directory; pass --out or set dir in [output]\n");
    return 1;
  }

  StudyResult result = run_study(cfg);
  export_study(cfg, result, out_dir);

  ordered_json out;
  out["command"] = "study";
  out["seed"] = cfg.seed;
  out["replicates"] = cfg.replicates;
  out["m"] = cfg.m;
  out["out"] = out_dir;
  ordered_json rates = ordered_json::array();
  for (std::size_t k = 0; k < result.alphas.size(); ++k) {
    if (cfg.run_pseudo) {
      rates.push_back({{"mode", "pseudo_cluster"},
                       {"alpha", result.alphas[k]},
                       {"rate", result.pseudo_rejection[k]}});
    }
  }
  for (std::size_t k = 0; k < result.alphas.size(); ++k) {
    if (cfg.run_naive) {
      rates.push_back({{"mode", "naive_global"},
                       {"alpha", result.alphas[k]},
                       {"rate", result.naive_rejection[k]}});
    }
  }
  out["rates"] = rates;
  emit(out);

  std::fprintf(stderr, "study: %u replicates, m = %" PRIu64 ", seed = %" PRIu64 "\n",
               cfg.replicates, cfg.m, cfg.seed);
  std::fprintf(stderr, "%-16s %-8s %s\n", "mode", "alpha", "rejection_rate");
  for (std::size_t k = 0; k < result.alphas.size(); ++k) {
    if (cfg.run_pseudo) {
      std::fprintf(stderr, "%-16s %-8g %.6g\n", "pseudo_cluster", result.alphas[k],
                   result.pseudo_rejection[k]);
    }
  }
  for (std::size_t k = 0; k < result.alphas.size(); ++k) {
    if (cfg.run_naive) {
      std::fprintf(stderr, "%-16s %-8g %.6g\n", "naive_global", result.alphas[k],
                   result.naive_rejection[k]);
    }
  }
  if (gnuplot_hints) print_gnuplot_hints(out_dir);
  return 0;
}

int cmd_diagnose(const GlobalOptions& global, const std::string& csv_path,
                 const SchemaFlags& schema, bool center) {
  SurveyDataset d = load_csv(csv_path, schema.to_schema());
  ValidationReport report = validate(d);

  ordered_json out;
  out["command"] = "diagnose";
  out["seed"] = global.seed;
  ordered_json validation;
  validation["ok"] = report.ok;
  validation["issues"] = ordered_json::array();
  for (const Finding& f : report.issues) validation["issues"].push_back(finding_json(f));
  validation["warnings"] = ordered_json::array();
  for (const Finding& f : report.warnings) validation["warnings"].push_back(finding_json(f));
  out["validation"] = validation;

  std::fprintf(stderr, "%s: validation %s (%zu issue(s), %zu warning(s))\n", csv_path.c_str(),
               report.ok ? "ok" : "FAILED", report.issues.size(), report.warnings.size());
  for (const Finding& f : report.issues) {
    std::fprintf(stderr, "issue %s: %s\n", f.code.c_str(), f.message.c_str());
  }
  for (const Finding& f : report.warnings) {
    std::fprintf(stderr, "warning %s: %s\n", f.code.c_str(), f.message.c_str());
  }

  if (!report.ok) {
    emit(out);
    return 1;
  }

  if (center) d = center_weighted(d);
  FittedLinearModel model = fit_wls(d);
  ClusterDecomposition dec = decompose(d, model.residuals);
  ordered_json diag = dataset_diagnostics(d, dec, model);
  out["diagnostics"] = diag;
  emit(out);
  print_kv(diag);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  GlobalOptions global;

  CLI::App app{"design-adjusted permutation tests for weighted cluster samples"};
  app.require_subcommand(1);
  auto* seed_opt = app.add_option("--seed", global.seed, "master seed (env SVYPERM_SEED)");
  auto* threads_opt = app.add_option("--threads", global.threads, "worker threads");
  app.add_option("--kernels", global.kernels, "kernel variant: scalar, avx2 or auto");

  // test
  auto* test = app.add_subcommand("test", "run one permutation test on a CSV sample");
  std::string test_csv;
  test->add_option("csv", test_csv, "input CSV")->required();
  SchemaFlags test_schema;
  test_schema.attach(test);
  std::string mode_name = "pseudo_cluster";
  std::uint64_t test_m = 1000;
  std::uint64_t test_cap = 1000000;
  bool test_center = false;
  std::string convention_name = "count_over_m";
  std::string sided_name = "two_sided";
  test->add_option("--mode", mode_name, "pseudo_cluster | naive_global | iid_mean_diff | exact_cluster")
      ->capture_default_str();
  test->add_option("--m", test_m, "Monte Carlo rearrangement draws")->capture_default_str();
  test->add_option("--cap", test_cap, "enumeration cap for exact_cluster")->capture_default_str();
  test->add_flag("--center", test_center, "subtract the weighted mean of y first");
  test->add_option("--p-convention", convention_name, "count_over_m | add_one")
      ->capture_default_str();
  test->add_option("--sided", sided_name, "two_sided | greater | less")->capture_default_str();

  // simulate
  auto* simulate = app.add_subcommand("simulate", "generate a clustered finite population");
  PopulationConfig pop_cfg;
  std::string delta_mode = "fixed";
  std::string sim_out, sim_effects;
  std::string labels_name = "B";
  simulate->add_option("--clusters", pop_cfg.clusters, "number of clusters")->capture_default_str();
  simulate->add_option("--cluster-size", pop_cfg.cluster_size, "units per cluster")
      ->capture_default_str();
  simulate->add_option("--sigma-nu", pop_cfg.sigma_nu, "sd of the cluster effect")
      ->capture_default_str();
  simulate->add_option("--sigma-eps", pop_cfg.sigma_eps, "sd of the unit noise")
      ->capture_default_str();
  simulate->add_option("--delta", pop_cfg.delta, "group effect; y gets delta*g - delta/2")
      ->capture_default_str();
  simulate->add_option("--delta-mode", delta_mode,
                       "fixed (use --delta) | sigma-eta (delta = sqrt(sigma_nu^2 + sigma_eps^2))")
      ->capture_default_str();
  simulate->add_option("--labels", labels_name, "label scheme: A, B or C")->capture_default_str();
  simulate->add_option("--out", sim_out, "population CSV path")->required();
  simulate->add_option("--effects-out", sim_effects, "true-effects sidecar path");

  // study
  auto* study = app.add_subcommand("study", "run a replicated sampling study from a config file");
  std::string study_config, study_out;
  bool gnuplot_hints = false;
  study->add_option("config", study_config, "INI config")->required();
  study->add_option("--out", study_out, "output directory (overrides [output] dir)");
  study->add_flag("--gnuplot-hints", gnuplot_hints, "print a gnuplot recipe to stderr");

  // diagnose
  auto* diagnose = app.add_subcommand("diagnose", "validate a CSV and print condition diagnostics");
  std::string diag_csv;
  diagnose->add_option("csv", diag_csv, "input CSV")->required();
  SchemaFlags diag_schema;
  diag_schema.attach(diagnose);
  bool diag_center = false;
  diagnose->add_flag("--center", diag_center, "subtract the weighted mean of y first");

  try {
    app.parse(argc, argv);

    if (seed_opt->count() > 0) {
      global.seed_given = true;
    } else if (const char* env = std::getenv("SVYPERM_SEED")) {
      global.seed = parse_env_seed(env);
      global.seed_given = true;
    }
    global.threads_given = threads_opt->count() > 0;
    if (global.threads == 0) throw SchemaError("--threads must be at least 1");
    if (!global.kernels.empty()) kernels::select(global.kernels);

    if (test->parsed()) {
      return cmd_test(global, test_csv, test_schema, mode_name, test_m, test_cap, test_center,
                      convention_name, sided_name);
    }
    if (simulate->parsed()) {
      if (auto parsed = parse_label_scheme(labels_name)) {
        pop_cfg.labels = *parsed;
      } else {
        throw SchemaError("unknown label scheme '" + labels_name + "'");
      }
      return cmd_simulate(global, pop_cfg, delta_mode, sim_out, sim_effects);
    }
    if (study->parsed()) return cmd_study(global, study_config, study_out, gnuplot_hints);
    if (diagnose->parsed()) return cmd_diagnose(global, diag_csv, diag_schema, diag_center);
    return 1;
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const NumericalError& e) {
    std::fprintf(stderr, "numerical error: %s\n", e.what());
    return 2;
  } catch (const SchemaError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  } catch (const EnumerationCapError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}
