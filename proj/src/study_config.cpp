#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <string>

#include "svyperm/errors.hpp"
#include "svyperm/rng.hpp"
#include "svyperm/study.hpp"

namespace svyperm {

namespace {

constexpr std::uint64_t kPopulationSeedStream = 0x706F7075ull;  // "popu"

std::string trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && (s[b] == ' ' || s[b] == '\t' || s[b] == '\r')) ++b;
  while (e > b && (s[e - 1] == ' ' || s[e - 1] == '\t' || s[e - 1] == '\r')) --e;
  return std::string(s.substr(b, e - b));
}

// key/value pairs of one [section]; keys must be consumed exactly once so
// typos surface as errors instead of silently keeping defaults
class Section {
 public:
  Section(std::string name, const std::filesystem::path& path) : name_(std::move(name)), path_(path) {}

  void insert(const std::string& key, const std::string& value, std::size_t line) {
    if (!kv_.emplace(key, value).second) {
      throw SchemaError(path_.string() + ":" + std::to_string(line) + ": duplicate key '" + key +
                        "' in [" + name_ + "]");
    }
  }

  std::optional<std::string> take(const std::string& key) {
    auto it = kv_.find(key);
    if (it == kv_.end()) return std::nullopt;
    consumed_.insert(key);
    return it->second;
  }

  void finish() const {
    for (const auto& [key, value] : kv_) {
      if (!consumed_.count(key)) {
        throw SchemaError(path_.string() + ": unknown key '" + key + "' in [" + name_ + "]");
      }
    }
  }

  const std::string& name() const { return name_; }

 private:
  std::string name_;
  std::filesystem::path path_;
  std::map<std::string, std::string> kv_;
  std::set<std::string> consumed_;
};

double parse_double_or_throw(const std::string& s, const std::string& what) {
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(v)) {
    throw SchemaError(what + ": not a finite number: '" + s + "'");
  }
  return v;
}

std::uint64_t parse_u64_or_throw(const std::string& s, const std::string& what) {
  std::uint64_t v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw SchemaError(what + ": not a nonnegative integer: '" + s + "'");
  }
  return v;
}

std::uint32_t parse_u32_or_throw(const std::string& s, const std::string& what) {
  std::uint64_t v = parse_u64_or_throw(s, what);
  if (v > 0xFFFFFFFFull) throw SchemaError(what + ": out of range: '" + s + "'");
  return static_cast<std::uint32_t>(v);
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start <= s.size()) {
    std::size_t comma = s.find(',', start);
    if (comma == std::string::npos) comma = s.size();
    std::string item = trim(std::string_view(s).substr(start, comma - start));
    if (!item.empty()) out.push_back(std::move(item));
    start = comma + 1;
  }
  return out;
}

}  // namespace

StudyConfig load_study_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw SchemaError("cannot open " + path.string());

  std::map<std::string, Section> sections;
  Section* current = nullptr;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    // inline comments start at a '#' or ';' that follows whitespace
    for (std::size_t i = 0; i < line.size(); ++i) {
      if ((line[i] == '#' || line[i] == ';') &&
          (i == 0 || line[i - 1] == ' ' || line[i - 1] == '\t')) {
        line.resize(i);
        break;
      }
    }
    std::string t = trim(line);
    if (t.empty()) continue;
    if (t.front() == '[') {
      if (t.back() != ']') {
        throw SchemaError(path.string() + ":" + std::to_string(line_no) + ": malformed section");
      }
      std::string name = trim(std::string_view(t).substr(1, t.size() - 2));
      auto [it, inserted] = sections.try_emplace(name, Section(name, path));
      if (!inserted) {
        throw SchemaError(path.string() + ":" + std::to_string(line_no) + ": duplicate section [" +
                          name + "]");
      }
      current = &it->second;
      continue;
    }
    std::size_t eq = t.find('=');
    if (eq == std::string::npos || !current) {
      throw SchemaError(path.string() + ":" + std::to_string(line_no) +
                        ": expected 'key = value' inside a section");
    }
    current->insert(trim(std::string_view(t).substr(0, eq)),
                    trim(std::string_view(t).substr(eq + 1)), line_no);
  }

  const std::set<std::string> known = {"population", "design", "test", "output"};
  for (const auto& [name, section] : sections) {
    if (!known.count(name)) throw SchemaError(path.string() + ": unknown section [" + name + "]");
  }
  // only [design] has no usable default
  if (!sections.count("design")) {
    throw SchemaError(path.string() + ": missing section [design]");
  }
  auto section = [&](const char* name) -> Section* {
    auto it = sections.find(name);
    return it == sections.end() ? nullptr : &it->second;
  };

  StudyConfig cfg;

  if (Section* sp = section("test")) {
    Section& s = *sp;
    if (auto v = s.take("replicates")) {
      cfg.replicates = parse_u32_or_throw(*v, "replicates");
      if (cfg.replicates == 0) throw SchemaError("replicates must be at least 1");
    }
    if (auto v = s.take("seed")) cfg.seed = parse_u64_or_throw(*v, "seed");
    if (auto v = s.take("threads")) {
      cfg.threads = parse_u32_or_throw(*v, "threads");
      if (cfg.threads == 0) throw SchemaError("threads must be at least 1");
    }
    if (auto v = s.take("m")) {
      cfg.m = parse_u64_or_throw(*v, "m");
      if (cfg.m == 0) throw SchemaError("m must be at least 1");
    }
    if (auto v = s.take("modes")) {
      cfg.run_pseudo = false;
      cfg.run_naive = false;
      for (const std::string& item : split_list(*v)) {
        auto mode = parse_test_mode(item);
        if (mode == TestMode::pseudo_cluster) cfg.run_pseudo = true;
        else if (mode == TestMode::naive_global) cfg.run_naive = true;
        else throw SchemaError("modes: expected pseudo or naive entries, got '" + item + "'");
      }
      if (!cfg.run_pseudo && !cfg.run_naive) throw SchemaError("modes: none given");
    }
    if (auto v = s.take("convention")) {
      auto parsed = parse_p_convention(*v);
      if (!parsed) throw SchemaError("convention: expected count_over_m or add_one");
      cfg.convention = *parsed;
    }
    if (auto v = s.take("alphas")) {
      cfg.alphas.clear();
      for (const std::string& item : split_list(*v)) {
        double alpha = parse_double_or_throw(item, "alphas");
        if (!(alpha > 0.0 && alpha < 1.0)) {
          throw SchemaError("alphas: must lie in (0, 1), got '" + item + "'");
        }
        if (!cfg.alphas.empty() && !(alpha > cfg.alphas.back())) {
          throw SchemaError("alphas: must be strictly increasing");
        }
        cfg.alphas.push_back(alpha);
      }
      if (cfg.alphas.empty()) throw SchemaError("alphas: none given");
    }
    s.finish();
  }

  cfg.population.seed = Rng::mix(cfg.seed, kPopulationSeedStream);
  if (Section* sp = section("population")) {
    Section& s = *sp;
    if (auto v = s.take("clusters")) cfg.population.clusters = parse_u32_or_throw(*v, "clusters");
    if (auto v = s.take("cluster_size")) {
      cfg.population.cluster_size = parse_u32_or_throw(*v, "cluster_size");
    }
    if (auto v = s.take("sigma_nu")) cfg.population.sigma_nu = parse_double_or_throw(*v, "sigma_nu");
    if (auto v = s.take("sigma_eps")) {
      cfg.population.sigma_eps = parse_double_or_throw(*v, "sigma_eps");
    }
    std::optional<std::string> delta = s.take("delta");
    if (auto v = s.take("labels")) {
      auto parsed = parse_label_scheme(*v);
      if (!parsed) throw SchemaError("labels: expected A, B or C, got '" + *v + "'");
      cfg.population.labels = *parsed;
    }
    if (auto v = s.take("seed")) {
      cfg.population.seed = parse_u64_or_throw(*v, "population seed");
    }
    s.finish();
    if (delta) {
      // the token sigma_eta pins the effect to one combined-noise sd
      cfg.population.delta = (*delta == "sigma_eta") ? sigma_eta(cfg.population)
                                                     : parse_double_or_throw(*delta, "delta");
    }
  }

  {
    Section& s = *section("design");
    auto kind = s.take("kind");
    if (!kind) throw SchemaError("design: missing 'kind'");
    if (*kind == "srs") {
      auto n = s.take("n");
      if (!n) throw SchemaError("design srs: missing 'n'");
      cfg.design = SrsDesign{parse_u32_or_throw(*n, "design n")};
    } else if (*kind == "cluster") {
      auto c = s.take("clusters");
      if (!c) throw SchemaError("design cluster: missing 'clusters'");
      cfg.design = ClusterDesign{parse_u32_or_throw(*c, "design clusters")};
    } else if (*kind == "stratified") {
      StratifiedDesign st;
      auto rule = s.take("rule");
      if (!rule) throw SchemaError("design stratified: missing 'rule'");
      auto parsed = parse_strata_rule(*rule);
      if (!parsed) throw SchemaError("design stratified: unknown rule '" + *rule + "'");
      st.rule = *parsed;
      auto n = s.take("n");
      auto sizes = s.take("sizes");
      auto fractions = s.take("fractions");
      if (sizes) {
        if (n || fractions) {
          throw SchemaError("design stratified: 'sizes' excludes 'n' and 'fractions'");
        }
        for (const std::string& item : split_list(*sizes)) {
          st.sizes.push_back(parse_u32_or_throw(item, "sizes"));
        }
        if (st.sizes.size() != stratum_count(st.rule)) {
          throw SchemaError("design stratified: " + std::to_string(st.sizes.size()) +
                            " sizes for " + std::to_string(stratum_count(st.rule)) + " strata");
        }
      } else {
        if (!n) throw SchemaError("design stratified: missing 'n' (or per-stratum 'sizes')");
        st.n = parse_u32_or_throw(*n, "design n");
        if (fractions) {
          for (const std::string& item : split_list(*fractions)) {
            st.fractions.push_back(parse_double_or_throw(item, "fractions"));
          }
          if (st.fractions.size() != stratum_count(st.rule)) {
            throw SchemaError("design stratified: " + std::to_string(st.fractions.size()) +
                              " fractions for " + std::to_string(stratum_count(st.rule)) +
                              " strata");
          }
        }
      }
      cfg.design = st;
    } else {
      throw SchemaError("design: unknown kind '" + *kind + "'");
    }
    s.finish();
  }

  if (Section* sp = section("output")) {
    Section& s = *sp;
    if (auto v = s.take("dir")) cfg.output_dir = *v;
    s.finish();
  }

  return cfg;
}

}  // namespace svyperm
