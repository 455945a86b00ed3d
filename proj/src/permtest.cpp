#include "svyperm/permtest.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "svyperm/detail/parallel.hpp"
#include "svyperm/errors.hpp"
#include "svyperm/kernels.hpp"
#include "svyperm/rng.hpp"

namespace svyperm {

namespace {

// All rearrangement draws for one test derive from (seed, kPlanStream, t).
// pseudo and naive share the stream so that on all-singleton clusterings,
// where the cluster shuffle is a global shuffle, matched seeds give
// identical plans.
constexpr std::uint64_t kPlanStream = 0x706C616Eull;  // "plan"

void fill_iota(std::uint32_t* idx, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) idx[i] = static_cast<std::uint32_t>(i);
}

// scratch for one worker thread
struct Scratch {
  std::vector<std::uint32_t> sigma0;
  std::vector<std::uint32_t> within;  // local indices, segmented by c.offset
  std::vector<double> buf;

  explicit Scratch(const ClusterDecomposition& c)
      : sigma0(c.cluster_count()), within(c.n()), buf(c.n()) {}
};

// sigma0 first, then each cluster in index order; a cluster of size 1
// consumes nothing, keeping the stream aligned with a plain global shuffle
// when every cluster is a singleton.
void draw_pseudo_plan(Rng& rng, const ClusterDecomposition& c, Scratch& s) {
  const std::size_t C = c.cluster_count();
  fill_iota(s.sigma0.data(), C);
  rng.shuffle(s.sigma0.data(), C);
  for (std::size_t i = 0; i < C; ++i) {
    std::uint32_t* seg = s.within.data() + c.offset[i];
    fill_iota(seg, c.cluster_sizes[i]);
    rng.shuffle(seg, c.cluster_sizes[i]);
  }
}

double eval_pseudo(const ClusterDecomposition& c, const std::uint32_t* sigma0,
                   const std::uint32_t* within, double* buf) {
  for (std::size_t i = 0; i < c.cluster_count(); ++i) {
    const std::uint32_t off = c.offset[i];
    kernels::gather_add_scalar(c.eps_grouped.data() + off, within + off, c.nu_hat[sigma0[i]],
                               buf + off, c.cluster_sizes[i]);
  }
  return kernels::masked_sum(buf, c.labels_grouped.data(), c.n());
}

double eval_naive(const ClusterDecomposition& c, const std::uint32_t* sigma, double* buf) {
  kernels::gather(c.eta_grouped.data(), sigma, buf, c.n());
  return kernels::masked_sum(buf, c.labels_grouped.data(), c.n());
}

std::uint64_t tail_count(std::span<const double> psi, double psi_obs, Sidedness sided) {
  switch (sided) {
    case Sidedness::two_sided:
      return kernels::count_abs_ge(psi.data(), std::fabs(psi_obs), psi.size());
    case Sidedness::greater: {
      std::uint64_t count = 0;
      for (double v : psi) count += v >= psi_obs;
      return count;
    }
    case Sidedness::less: {
      std::uint64_t count = 0;
      for (double v : psi) count += v <= psi_obs;
      return count;
    }
  }
  return 0;
}

double p_from_count(std::uint64_t count, std::uint64_t m, PConvention convention) {
  if (convention == PConvention::add_one) {
    return static_cast<double>(count + 1) / static_cast<double>(m + 1);
  }
  return static_cast<double>(count) / static_cast<double>(m);
}

void check_labels(std::size_t ones, std::size_t n, const char* who) {
  if (n == 0) throw std::invalid_argument(std::string(who) + ": empty input");
  if (ones == 0 || ones == n) {
    throw std::invalid_argument(std::string(who) + ": both group labels must occur");
  }
}

void validate_bijection(std::span<const std::uint32_t> sigma, std::size_t n, const char* what) {
  if (sigma.size() != n) {
    throw SchemaError(std::string(what) + ": size " + std::to_string(sigma.size()) +
                      ", expected " + std::to_string(n));
  }
  std::vector<bool> seen(n, false);
  for (std::uint32_t v : sigma) {
    if (v >= n || seen[v]) {
      throw SchemaError(std::string(what) + ": not a bijection on [0, " + std::to_string(n) + ")");
    }
    seen[v] = true;
  }
}

using detail::parallel_for;

std::uint64_t checked_space_size(const ClusterDecomposition& c, std::uint64_t cap,
                                 const char* who) {
  constexpr std::uint64_t kMax = ~std::uint64_t{0};
  // saturating product, so the error can still report the exact size when
  // it fits in 64 bits
  auto grow = [](std::uint64_t size, std::uint64_t factor) {
    if (size > kMax / factor) return kMax;
    return size * factor;
  };
  std::uint64_t size = 1;
  for (std::uint64_t f = 2; f <= c.cluster_count(); ++f) size = grow(size, f);
  for (std::uint32_t n_i : c.cluster_sizes) {
    for (std::uint64_t f = 2; f <= n_i; ++f) size = grow(size, f);
  }
  if (size > cap) {
    std::string shown = size == kMax ? "over 2^64 plans" : std::to_string(size) + " plans";
    throw EnumerationCapError(
        std::string(who) + ": rearrangement space has " + shown + ", cap is " +
            std::to_string(cap),
        size);
  }
  return size;
}

PermutationTestResult assemble(double psi_obs, std::vector<double> psi, TestMode mode,
                               std::uint64_t m, std::uint64_t seed, const TestOptions& opt,
                               bool exact) {
  PermutationTestResult r;
  r.psi_observed = psi_obs;
  std::uint64_t count = tail_count(psi, psi_obs, opt.sidedness);
  r.p_value = exact ? static_cast<double>(count) / static_cast<double>(m)
                    : p_from_count(count, m, opt.convention);
  r.psi_permuted = std::move(psi);
  r.mode = mode;
  r.m = m;
  r.seed = seed;
  return r;
}

}  // namespace

const char* to_string(TestMode mode) {
  switch (mode) {
    case TestMode::pseudo_cluster: return "pseudo_cluster";
    case TestMode::naive_global: return "naive_global";
    case TestMode::iid_mean_diff: return "iid_mean_diff";
    case TestMode::exact_cluster: return "exact_cluster";
  }
  return "?";
}

const char* to_string(PConvention convention) {
  return convention == PConvention::add_one ? "add_one" : "count_over_m";
}

const char* to_string(Sidedness sidedness) {
  switch (sidedness) {
    case Sidedness::two_sided: return "two_sided";
    case Sidedness::greater: return "greater";
    case Sidedness::less: return "less";
  }
  return "?";
}

std::optional<TestMode> parse_test_mode(std::string_view s) {
  if (s == "pseudo_cluster" || s == "pseudo") return TestMode::pseudo_cluster;
  if (s == "naive_global" || s == "naive") return TestMode::naive_global;
  if (s == "iid_mean_diff" || s == "iid") return TestMode::iid_mean_diff;
  if (s == "exact_cluster" || s == "exact") return TestMode::exact_cluster;
  return std::nullopt;
}

std::optional<PConvention> parse_p_convention(std::string_view s) {
  if (s == "count_over_m" || s == "plain") return PConvention::count_over_m;
  if (s == "add_one") return PConvention::add_one;
  return std::nullopt;
}

std::optional<Sidedness> parse_sidedness(std::string_view s) {
  if (s == "two_sided" || s == "two") return Sidedness::two_sided;
  if (s == "greater") return Sidedness::greater;
  if (s == "less") return Sidedness::less;
  return std::nullopt;
}

PermutationPlan PermutationPlan::identity(const ClusterDecomposition& c) {
  PermutationPlan plan;
  plan.sigma0.resize(c.cluster_count());
  fill_iota(plan.sigma0.data(), plan.sigma0.size());
  plan.within.resize(c.cluster_count());
  for (std::size_t i = 0; i < c.cluster_count(); ++i) {
    plan.within[i].resize(c.cluster_sizes[i]);
    fill_iota(plan.within[i].data(), plan.within[i].size());
  }
  return plan;
}

double statistic_psi(std::span<const double> values, std::span<const std::uint8_t> g) {
  if (values.size() != g.size()) {
    throw SchemaError("statistic_psi: values and labels differ in length");
  }
  return kernels::masked_sum(values.data(), g.data(), values.size());
}

std::vector<double> pseudo_permute(const ClusterDecomposition& c, const PermutationPlan& plan) {
  const std::size_t C = c.cluster_count();
  validate_bijection(plan.sigma0, C, "pseudo_permute: sigma0");
  if (plan.within.size() != C) {
    throw SchemaError("pseudo_permute: within has " + std::to_string(plan.within.size()) +
                      " clusters, expected " + std::to_string(C));
  }
  for (std::size_t i = 0; i < C; ++i) {
    validate_bijection(plan.within[i], c.cluster_sizes[i], "pseudo_permute: within");
  }

  std::vector<double> grouped(c.n());
  for (std::size_t i = 0; i < C; ++i) {
    const std::uint32_t off = c.offset[i];
    kernels::gather_add_scalar(c.eps_grouped.data() + off, plan.within[i].data(),
                               c.nu_hat[plan.sigma0[i]], grouped.data() + off,
                               c.cluster_sizes[i]);
  }
  std::vector<double> out(c.n());
  for (std::size_t q = 0; q < c.n(); ++q) out[c.row_at[q]] = grouped[q];
  return out;
}

std::vector<double> naive_permute(std::span<const double> values,
                                  std::span<const std::uint32_t> sigma) {
  validate_bijection(sigma, values.size(), "naive_permute: sigma");
  std::vector<double> out(values.size());
  kernels::gather(values.data(), sigma.data(), out.data(), values.size());
  return out;
}

PermutationTestResult run_test(const ClusterDecomposition& c, TestMode mode, std::uint64_t m,
                               std::uint64_t seed, const TestOptions& opt) {
  if (mode != TestMode::pseudo_cluster && mode != TestMode::naive_global) {
    throw std::invalid_argument(std::string("run_test: mode ") + to_string(mode) +
                                " is not a Monte Carlo cluster mode");
  }
  if (m == 0) throw std::invalid_argument("run_test: m must be at least 1");
  const std::size_t n = c.n();
  std::size_t ones = 0;
  for (std::uint8_t g : c.labels) ones += g;
  check_labels(ones, n, "run_test");

  const double psi_obs =
      kernels::masked_sum(c.eta_grouped.data(), c.labels_grouped.data(), n);

  std::vector<double> psi(m);
  if (mode == TestMode::pseudo_cluster) {
    parallel_for(m, opt.threads, [&, scratch = Scratch(c)](std::uint64_t t) mutable {
      Rng rng = Rng::derive(seed, kPlanStream, t);
      draw_pseudo_plan(rng, c, scratch);
      psi[t] = eval_pseudo(c, scratch.sigma0.data(), scratch.within.data(), scratch.buf.data());
    });
  } else {
    parallel_for(m, opt.threads, [&, scratch = Scratch(c)](std::uint64_t t) mutable {
      Rng rng = Rng::derive(seed, kPlanStream, t);
      fill_iota(scratch.within.data(), n);
      rng.shuffle(scratch.within.data(), n);
      psi[t] = eval_naive(c, scratch.within.data(), scratch.buf.data());
    });
  }
  return assemble(psi_obs, std::move(psi), mode, m, seed, opt, /*exact=*/false);
}

PermutationTestResult exact_test(const ClusterDecomposition& c, std::uint64_t cap,
                                 const TestOptions& opt) {
  const std::size_t C = c.cluster_count();
  const std::size_t n = c.n();
  if (n == 0) throw std::invalid_argument("exact_test: empty decomposition");
  const std::uint64_t space = checked_space_size(c, cap, "exact_test");

  const double psi_obs =
      kernels::masked_sum(c.eta_grouped.data(), c.labels_grouped.data(), n);

  std::vector<std::uint32_t> sigma0(C);
  fill_iota(sigma0.data(), C);
  PermutationPlan plan = PermutationPlan::identity(c);
  std::vector<std::uint32_t> within_flat(n);
  std::vector<double> buf(n);

  std::vector<double> psi;
  psi.reserve(space);
  do {
    bool more_within = true;
    while (more_within) {
      for (std::size_t i = 0; i < C; ++i) {
        std::copy(plan.within[i].begin(), plan.within[i].end(),
                  within_flat.begin() + c.offset[i]);
      }
      psi.push_back(eval_pseudo(c, sigma0.data(), within_flat.data(), buf.data()));

      // odometer over the per-cluster permutations; next_permutation wraps
      // back to ascending order when a digit rolls over
      more_within = false;
      for (std::size_t i = C; i-- > 0;) {
        if (std::next_permutation(plan.within[i].begin(), plan.within[i].end())) {
          more_within = true;
          break;
        }
      }
    }
  } while (std::next_permutation(sigma0.begin(), sigma0.end()));

  return assemble(psi_obs, std::move(psi), TestMode::exact_cluster, space, 0, opt,
                  /*exact=*/true);
}

PermutationTestResult iid_mean_diff_test(std::span<const double> y,
                                         std::span<const std::uint8_t> g, std::uint64_t m,
                                         std::uint64_t seed, const TestOptions& opt) {
  const std::size_t n = y.size();
  if (g.size() != n) throw std::invalid_argument("iid_mean_diff_test: y and g differ in length");
  if (m == 0) throw std::invalid_argument("iid_mean_diff_test: m must be at least 1");
  std::size_t ones = 0;
  for (std::uint8_t v : g) ones += v;
  check_labels(ones, n, "iid_mean_diff_test");
  const double n1 = static_cast<double>(ones);
  const double n0 = static_cast<double>(n - ones);
  const double total = kernels::sum(y.data(), n);

  auto mean_diff = [&](const double* values) {
    double s1 = kernels::masked_sum(values, g.data(), n);
    return s1 / n1 - (total - s1) / n0;
  };

  const double psi_obs = mean_diff(y.data());
  std::vector<double> psi(m);
  parallel_for(m, opt.threads, [&, sigma = std::vector<std::uint32_t>(n),
                                buf = std::vector<double>(n)](std::uint64_t t) mutable {
    Rng rng = Rng::derive(seed, kPlanStream, t);
    fill_iota(sigma.data(), n);
    rng.shuffle(sigma.data(), n);
    kernels::gather(y.data(), sigma.data(), buf.data(), n);
    psi[t] = mean_diff(buf.data());
  });
  return assemble(psi_obs, std::move(psi), TestMode::iid_mean_diff, m, seed, opt,
                  /*exact=*/false);
}

PermutationTestResult iid_mean_diff_exact(std::span<const double> y,
                                          std::span<const std::uint8_t> g, std::uint64_t cap,
                                          const TestOptions& opt) {
  const std::size_t n = y.size();
  if (g.size() != n) throw std::invalid_argument("iid_mean_diff_exact: y and g differ in length");
  std::size_t ones = 0;
  for (std::uint8_t v : g) ones += v;
  check_labels(ones, n, "iid_mean_diff_exact");

  std::uint64_t space = 1;
  for (std::uint64_t j = 1; j <= ones; ++j) {
    // binomial coefficient built factor by factor; every intermediate value
    // is itself a binomial coefficient, so the division stays exact
    unsigned __int128 next = static_cast<unsigned __int128>(space) * (n - ones + j) / j;
    if (next > cap) {
      throw EnumerationCapError("iid_mean_diff_exact: assignment space exceeds cap " +
                                    std::to_string(cap),
                                0);
    }
    space = static_cast<std::uint64_t>(next);
  }

  const double n1 = static_cast<double>(ones);
  const double n0 = static_cast<double>(n - ones);
  const double total = kernels::sum(y.data(), n);

  auto subset_psi = [&](const std::vector<std::uint32_t>& pick) {
    double s1 = 0.0;
    for (std::uint32_t i : pick) s1 += y[i];
    return s1 / n1 - (total - s1) / n0;
  };

  // observed subset in ascending order so its enumerated twin matches bit
  // for bit
  std::vector<std::uint32_t> observed;
  for (std::size_t i = 0; i < n; ++i) {
    if (g[i]) observed.push_back(static_cast<std::uint32_t>(i));
  }
  const double psi_obs = subset_psi(observed);

  std::vector<std::uint32_t> pick(ones);
  fill_iota(pick.data(), ones);
  std::vector<double> psi;
  psi.reserve(space);
  while (true) {
    psi.push_back(subset_psi(pick));
    // lexicographic combination walker
    std::size_t j = ones;
    while (j > 0 && pick[j - 1] == n - ones + j - 1) --j;
    if (j == 0) break;
    ++pick[j - 1];
    for (std::size_t k = j; k < ones; ++k) pick[k] = pick[k - 1] + 1;
  }

  return assemble(psi_obs, std::move(psi), TestMode::iid_mean_diff, space, 0, opt,
                  /*exact=*/true);
}

}  // namespace svyperm
