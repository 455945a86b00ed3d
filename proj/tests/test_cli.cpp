// End-to-end checks that drive the installed binary through /bin/sh. The
// build passes the binary location in SVYPERM_CLI_PATH and the bundled data
// directory in SVYPERM_DATA_DIR.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct RunResult {
  int exit_code = -1;
  std::string out;
  std::string err;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path scratch_dir() {
  fs::path d = fs::temp_directory_path() / "svyperm_cli_tests";
  fs::create_directories(d);
  return d;
}

// env_prefix like "SVYPERM_SEED=7 "; the parent SVYPERM_SEED is always
// scrubbed first so tests control exactly what the child sees
RunResult run_cli(const std::string& args, const std::string& env_prefix = "") {
  static int counter = 0;
  fs::path out = scratch_dir() / ("stdout_" + std::to_string(counter) + ".txt");
  fs::path err = scratch_dir() / ("stderr_" + std::to_string(counter) + ".txt");
  ++counter;

  std::string cmd = "env -u SVYPERM_SEED " + env_prefix + "\"" SVYPERM_CLI_PATH "\" " + args +
                    " > \"" + out.string() + "\" 2> \"" + err.string() + "\"";
  int rc = std::system(cmd.c_str());
  RunResult r;
  r.exit_code = (rc != -1 && WIFEXITED(rc)) ? WEXITSTATUS(rc) : -2;
  r.out = slurp(out);
  r.err = slurp(err);
  return r;
}

std::string example_csv() { return std::string(SVYPERM_DATA_DIR) + "/example_sample.csv"; }

fs::path write_file(const std::string& name, const std::string& content) {
  fs::path p = scratch_dir() / name;
  std::ofstream out(p, std::ios::binary);
  out << content;
  return p;
}

}  // namespace

TEST_CASE("test subcommand is byte-stable for a fixed seed") {
  std::string args = "--seed 7 test " + example_csv() + " --mode pseudo_cluster --m 500";
  RunResult a = run_cli(args);
  RunResult b = run_cli(args);
  REQUIRE(a.exit_code == 0);
  CHECK(a.out == b.out);

  json j = json::parse(a.out);
  CHECK(j["command"] == "test");
  CHECK(j["seed"] == 7);
  CHECK(j["result"]["mode"] == "pseudo_cluster");
  CHECK(j["result"]["m"] == 500);
  double p = j["result"]["p_value"].get<double>();
  CHECK(p >= 0.0);
  CHECK(p <= 1.0);
  CHECK(j["result"]["psi_permuted"].size() == 500);
  CHECK(j["diagnostics"]["n"] == 30);
  CHECK(j["diagnostics"]["clusters"] == 6);
  // the resolved seed also shows up on the human channel
  CHECK(a.err.find("seed = 7") != std::string::npos);
}

TEST_CASE("both rearrangement modes share the observed statistic") {
  RunResult p = run_cli("--seed 3 test " + example_csv() + " --mode pseudo_cluster --m 200");
  RunResult n = run_cli("--seed 3 test " + example_csv() + " --mode naive_global --m 200");
  REQUIRE(p.exit_code == 0);
  REQUIRE(n.exit_code == 0);
  json jp = json::parse(p.out);
  json jn = json::parse(n.out);
  // compare the serialized number, which round-trips doubles exactly
  CHECK(jp["result"]["psi_observed"].dump() == jn["result"]["psi_observed"].dump());
  CHECK(jp["result"]["mode"] != jn["result"]["mode"]);
}

TEST_CASE("seed precedence: flag beats environment beats default") {
  std::string tail = "test " + example_csv() + " --m 100";
  RunResult flag = run_cli("--seed 9 " + tail);
  RunResult env = run_cli(tail, "SVYPERM_SEED=9 ");
  RunResult both = run_cli("--seed 9 " + tail, "SVYPERM_SEED=5 ");
  RunResult fallback = run_cli(tail);
  REQUIRE(flag.exit_code == 0);
  CHECK(flag.out == env.out);
  CHECK(flag.out == both.out);
  CHECK(json::parse(fallback.out)["seed"] == 1);

  RunResult bad = run_cli(tail, "SVYPERM_SEED=7x ");
  CHECK(bad.exit_code == 1);
  CHECK(bad.err.find("SVYPERM_SEED") != std::string::npos);
}

TEST_CASE("malformed CSV exits 1 with the offending line") {
  fs::path bad = write_file("bad_row.csv",
                            "y,g,w,cluster\n"
                            "1.0,0,2.0,a\n"
                            "2.0,oops,2.0,a\n"
                            "3.0,1,2.0,b\n");
  RunResult r = run_cli("test " + bad.string());
  CHECK(r.exit_code == 1);
  CHECK(r.err.find("line 3") != std::string::npos);
}

TEST_CASE("validation failures exit 1 and name the finding") {
  // parses fine, but every unit carries the same label
  fs::path bad = write_file("one_group.csv",
                            "y,g,w,cluster\n"
                            "1.0,0,2.0,a\n"
                            "2.0,0,2.0,a\n"
                            "3.0,0,2.0,b\n"
                            "4.0,0,2.0,b\n");
  RunResult r = run_cli("test " + bad.string());
  CHECK(r.exit_code == 1);
  CHECK(r.err.find("fails validation") != std::string::npos);
  CHECK(r.err.find("degenerate_group") != std::string::npos);
}

TEST_CASE("a singular design matrix exits 2") {
  fs::path sing = write_file("singular.csv",
                             "y,g,w,cluster,x1,x2\n"
                             "1.0,0,2.0,a,1.0,1.0\n"
                             "2.0,1,2.0,a,2.0,2.0\n"
                             "3.0,1,2.0,b,3.0,3.0\n"
                             "4.0,0,2.0,b,4.0,4.0\n"
                             "5.0,0,2.0,c,5.0,5.0\n"
                             "6.0,1,2.0,c,6.0,6.0\n");
  RunResult r = run_cli("test " + sing.string() + " --covariates x1,x2");
  CHECK(r.exit_code == 2);
  CHECK(r.err.find("numerical error") != std::string::npos);
}

TEST_CASE("simulate writes reproducible population and sidecar files") {
  fs::path out = scratch_dir() / "pop_a.csv";
  fs::path out2 = scratch_dir() / "pop_b.csv";
  std::string flags = "--seed 11 simulate --clusters 10 --cluster-size 5 ";
  RunResult a = run_cli(flags + "--out " + out.string());
  RunResult b = run_cli(flags + "--out " + out2.string());
  REQUIRE(a.exit_code == 0);

  json j = json::parse(a.out);
  CHECK(j["command"] == "simulate");
  CHECK(j["n"] == 50);
  CHECK(j["g1_count"].get<int>() > 0);
  CHECK(fs::exists(out));
  CHECK(fs::exists(out.string() + ".effects.csv"));

  // header plus one row per unit
  std::string pop = slurp(out);
  std::size_t lines = 0;
  for (char c : pop) lines += (c == '\n');
  CHECK(lines == 51);

  CHECK(pop == slurp(out2));
  CHECK(slurp(out.string() + ".effects.csv") == slurp(out2.string() + ".effects.csv"));
}

TEST_CASE("simulate --delta-mode sigma-eta pins delta to the combined sd") {
  fs::path out = scratch_dir() / "pop_eta.csv";
  RunResult r = run_cli("--seed 2 simulate --clusters 6 --cluster-size 4 --delta-mode sigma-eta --out " +
                        out.string());
  REQUIRE(r.exit_code == 0);
  json j = json::parse(r.out);
  CHECK(j["delta"].get<double>() == doctest::Approx(4.0311288741492746).epsilon(1e-15));
  CHECK(j["delta"].dump() == j["sigma_eta"].dump());

  RunResult bad = run_cli("simulate --delta-mode bogus --out " + out.string());
  CHECK(bad.exit_code == 1);
  CHECK(bad.err.find("delta-mode") != std::string::npos);
}

TEST_CASE("study runs a config end to end and is thread-invariant") {
  fs::path out1 = scratch_dir() / "study_t1";
  fs::path out2 = scratch_dir() / "study_t2";
  fs::remove_all(out1);
  fs::remove_all(out2);
  std::string smoke = std::string(SVYPERM_DATA_DIR) + "/smoke.ini";

  RunResult a = run_cli("--threads 1 study " + smoke + " --out " + out1.string());
  RunResult b = run_cli("--threads 2 study " + smoke + " --out " + out2.string());
  REQUIRE(a.exit_code == 0);
  REQUIRE(b.exit_code == 0);

  for (const char* name : {"per_replicate.csv", "curves.csv", "rates.csv", "manifest.json"}) {
    CHECK(fs::exists(out1 / name));
  }
  // thread count changes the manifest but not any result
  CHECK(slurp(out1 / "per_replicate.csv") == slurp(out2 / "per_replicate.csv"));
  CHECK(slurp(out1 / "curves.csv") == slurp(out2 / "curves.csv"));
  CHECK(slurp(out1 / "rates.csv") == slurp(out2 / "rates.csv"));

  json j = json::parse(a.out);
  CHECK(j["command"] == "study");
  CHECK(j["replicates"] == 1);
  // default alpha grid, both modes
  CHECK(j["rates"].size() == 6);
  CHECK(a.err.find("rejection_rate") != std::string::npos);
}

TEST_CASE("study resolves the output directory from config when --out is absent") {
  fs::path dir = scratch_dir() / "study_cfg_out";
  fs::remove_all(dir);
  fs::path cfg = write_file("smoke_with_out.ini",
                            "[design]\nkind = srs\nn = 30\n"
                            "[population]\nclusters = 40\ncluster_size = 8\n"
                            "[test]\nreplicates = 1\nm = 100\n"
                            "[output]\ndir = " + dir.string() + "\n");
  RunResult r = run_cli("study " + cfg.string());
  REQUIRE(r.exit_code == 0);
  CHECK(fs::exists(dir / "manifest.json"));
  CHECK(json::parse(r.out)["out"] == dir.string());

  // no --out anywhere: refuse rather than guess
  std::string smoke = std::string(SVYPERM_DATA_DIR) + "/smoke.ini";
  RunResult none = run_cli("study " + smoke);
  CHECK(none.exit_code == 1);
  CHECK(none.err.find("output") != std::string::npos);

  RunResult hints = run_cli("study " + cfg.string() + " --gnuplot-hints");
  REQUIRE(hints.exit_code == 0);
  CHECK(hints.err.find("gnuplot") != std::string::npos);
}

TEST_CASE("study seed flag overrides the config seed") {
  fs::path d1 = scratch_dir() / "study_seed1";
  fs::path d2 = scratch_dir() / "study_seed2";
  fs::remove_all(d1);
  fs::remove_all(d2);
  std::string smoke = std::string(SVYPERM_DATA_DIR) + "/smoke.ini";
  RunResult a = run_cli("--seed 404 study " + smoke + " --out " + d1.string());
  RunResult b = run_cli("study " + smoke + " --out " + d2.string(), "SVYPERM_SEED=404 ");
  REQUIRE(a.exit_code == 0);
  CHECK(json::parse(a.out)["seed"] == 404);
  CHECK(slurp(d1 / "per_replicate.csv") == slurp(d2 / "per_replicate.csv"));
}

TEST_CASE("diagnose reports validation and condition numbers") {
  RunResult ok = run_cli("diagnose " + example_csv());
  REQUIRE(ok.exit_code == 0);
  json j = json::parse(ok.out);
  CHECK(j["validation"]["ok"] == true);
  CHECK(j["diagnostics"]["clusters"] == 6);
  CHECK(j["diagnostics"]["gram_condition"].get<double>() >= 1.0);

  fs::path bad = write_file("diag_bad.csv",
                            "y,g,w,cluster\n"
                            "1.0,1,1.0,a\n"
                            "2.0,1,1.0,a\n"
                            "3.0,1,1.0,b\n"
                            "4.0,1,1.0,b\n");
  RunResult fail = run_cli("diagnose " + bad.string());
  CHECK(fail.exit_code == 1);
  json jf = json::parse(fail.out);
  CHECK(jf["validation"]["ok"] == false);
  CHECK(jf["validation"]["issues"].size() >= 1);
  CHECK(jf.find("diagnostics") == jf.end());
}

TEST_CASE("unknown flags and subcommands are rejected") {
  CHECK(run_cli("test " + example_csv() + " --frobnicate").exit_code != 0);
  CHECK(run_cli("explode").exit_code != 0);
  CHECK(run_cli("").exit_code != 0);
}

TEST_CASE("kernel selection is honored and validated") {
  RunResult scalar = run_cli("--kernels scalar test " + example_csv() + " --m 50");
  REQUIRE(scalar.exit_code == 0);
  CHECK(json::parse(scalar.out)["diagnostics"]["kernels"] == "scalar");

  RunResult bogus = run_cli("--kernels neon test " + example_csv() + " --m 50");
  CHECK(bogus.exit_code == 1);

  // kernel choice must not change the numbers
  RunResult auto_run = run_cli("--kernels auto --seed 5 test " + example_csv() + " --m 200");
  RunResult scalar_run = run_cli("--kernels scalar --seed 5 test " + example_csv() + " --m 200");
  REQUIRE(auto_run.exit_code == 0);
  json ja = json::parse(auto_run.out);
  json js = json::parse(scalar_run.out);
  CHECK(ja["result"]["psi_observed"].dump() == js["result"]["psi_observed"].dump());
  CHECK(ja["result"]["p_value"].dump() == js["result"]["p_value"].dump());
}

TEST_CASE("exact mode enumerates small spaces and refuses big ones") {
  fs::path small = write_file("exact_small.csv",
                              "y,g,w,cluster\n"
                              "1.0,0,2.0,a\n"
                              "4.0,1,2.0,a\n"
                              "2.0,1,2.0,b\n"
                              "3.0,0,2.0,b\n");
  RunResult r = run_cli("test " + small.string() + " --mode exact_cluster");
  REQUIRE(r.exit_code == 0);
  json j = json::parse(r.out);
  // space = 2! * 2! * 2! = 8, and p is an exact multiple of 1/8
  CHECK(j["result"]["m"] == 8);
  double p = j["result"]["p_value"].get<double>();
  CHECK(p * 8 == doctest::Approx(std::round(p * 8)).epsilon(1e-12));

  RunResult big = run_cli("test " + example_csv() + " --mode exact_cluster");
  CHECK(big.exit_code == 1);
  CHECK(big.err.find("cap") != std::string::npos);

  RunResult lifted = run_cli("test " + small.string() + " --mode exact_cluster --cap 4");
  CHECK(lifted.exit_code == 1);
}

TEST_CASE("iid mode ignores design columns") {
  RunResult r = run_cli("--seed 6 test " + example_csv() + " --mode iid_mean_diff --m 300");
  REQUIRE(r.exit_code == 0);
  json j = json::parse(r.out);
  CHECK(j["result"]["mode"] == "iid_mean_diff");
  CHECK(j["diagnostics"].find("gram_condition") == j["diagnostics"].end());
  CHECK(j["diagnostics"]["n"] == 30);
}

TEST_CASE("--center leaves the statistic alone under an intercept fit") {
  RunResult plain = run_cli("--seed 8 test " + example_csv() + " --m 100");
  RunResult centered = run_cli("--seed 8 test " + example_csv() + " --m 100 --center");
  REQUIRE(plain.exit_code == 0);
  REQUIRE(centered.exit_code == 0);
  json jp = json::parse(plain.out);
  json jc = json::parse(centered.out);
  CHECK(jp["result"]["psi_observed"].get<double>() ==
        doctest::Approx(jc["result"]["psi_observed"].get<double>()).epsilon(1e-9));
  CHECK(jc["diagnostics"].contains("weighted_mean_y"));
  CHECK(!jp["diagnostics"].contains("weighted_mean_y"));
}

TEST_CASE("test output matches the documented schema") {
  RunResult r = run_cli("--seed 4 test " + example_csv() + " --m 64");
  REQUIRE(r.exit_code == 0);
  json doc = json::parse(r.out);

  fs::path schema_path = fs::path(SVYPERM_DATA_DIR).parent_path() / "docs" / "result.schema.json";
  json schema = json::parse(slurp(schema_path));
  const json& defs = schema["definitions"];

  // structural walk of the test_output branch: required members present,
  // no members beyond the declared properties
  auto check_object = [&](const json& node, const json& def) {
    for (const auto& req : def["required"]) {
      CAPTURE(req.get<std::string>());
      CHECK(node.contains(req.get<std::string>()));
    }
    for (auto it = node.begin(); it != node.end(); ++it) {
      CAPTURE(it.key());
      CHECK(def["properties"].contains(it.key()));
    }
  };
  check_object(doc, defs["test_output"]);
  check_object(doc["result"], defs["test_result"]);
  check_object(doc["diagnostics"], defs["diagnostics"]);

  std::string mode = doc["result"]["mode"].get<std::string>();
  bool mode_known = false;
  for (const auto& v : defs["test_result"]["properties"]["mode"]["enum"]) {
    if (v == mode) mode_known = true;
  }
  CHECK(mode_known);
}
