#pragma once

#include <cstddef>
#include <cstdint>
#include <string_view>

namespace svyperm::kernels {

// Double-precision inner loops used by the estimator and the permutation
// engine. The scalar table is the reference implementation; on x86-64 an
// AVX2+FMA table is selected at startup when the CPU supports it. The
// environment variable SVYPERM_KERNELS=scalar|avx2|auto overrides selection.
//
// Accumulation order differs between variants, so results agree only up to
// the usual floating-point reassociation error, not bit for bit.
struct KernelTable {
  double (*sum)(const double* x, std::size_t n);
  double (*dot)(const double* x, const double* y, std::size_t n);
  // sum_i x[i]*y[i]*z[i]
  double (*dot3)(const double* x, const double* y, const double* z, std::size_t n);
  void (*multiply)(const double* x, const double* y, double* out, std::size_t n);
  // y += a*x
  void (*axpy)(double a, const double* x, double* y, std::size_t n);
  void (*add_scalar)(const double* x, double c, double* out, std::size_t n);
  // sum of x[i] where mask[i] != 0
  double (*masked_sum)(const double* x, const std::uint8_t* mask, std::size_t n);
  // out[i] = x[idx[i]]
  void (*gather)(const double* x, const std::uint32_t* idx, double* out, std::size_t n);
  // out[i] = x[idx[i]] + c
  void (*gather_add_scalar)(const double* x, const std::uint32_t* idx, double c,
                            double* out, std::size_t n);
  std::size_t (*count_abs_ge)(const double* x, double threshold, std::size_t n);
  double (*max_abs)(const double* x, std::size_t n);
  const char* name;
};

const KernelTable& scalar_table();
#if defined(__x86_64__) || defined(_M_X64)
const KernelTable& avx2_table();
#endif

bool cpu_supports_avx2_fma();

// Active table, chosen once on first use.
const KernelTable& active();

// Reselects the active table: "scalar", "avx2" or "auto". Throws
// std::invalid_argument for unknown names and std::runtime_error when
// "avx2" is requested on a machine without AVX2+FMA.
void select(std::string_view name);

inline double sum(const double* x, std::size_t n) { return active().sum(x, n); }
inline double dot(const double* x, const double* y, std::size_t n) {
  return active().dot(x, y, n);
}
inline double dot3(const double* x, const double* y, const double* z, std::size_t n) {
  return active().dot3(x, y, z, n);
}
inline void multiply(const double* x, const double* y, double* out, std::size_t n) {
  active().multiply(x, y, out, n);
}
inline void axpy(double a, const double* x, double* y, std::size_t n) {
  active().axpy(a, x, y, n);
}
inline void add_scalar(const double* x, double c, double* out, std::size_t n) {
  active().add_scalar(x, c, out, n);
}
inline double masked_sum(const double* x, const std::uint8_t* mask, std::size_t n) {
  return active().masked_sum(x, mask, n);
}
inline void gather(const double* x, const std::uint32_t* idx, double* out, std::size_t n) {
  active().gather(x, idx, out, n);
}
inline void gather_add_scalar(const double* x, const std::uint32_t* idx, double c,
                              double* out, std::size_t n) {
  active().gather_add_scalar(x, idx, c, out, n);
}
inline std::size_t count_abs_ge(const double* x, double threshold, std::size_t n) {
  return active().count_abs_ge(x, threshold, n);
}
inline double max_abs(const double* x, std::size_t n) { return active().max_abs(x, n); }

}  // namespace svyperm::kernels
