// AVX2+FMA variants. This translation unit is the only one compiled with
// -mavx2 -mfma; callers reach it through the dispatch table, never directly.

#include "svyperm/kernels.hpp"

#if defined(__x86_64__) || defined(_M_X64)

#include <immintrin.h>

#include <cmath>
#include <cstring>

namespace svyperm::kernels {
namespace {

inline double hsum(__m256d v) {
  __m128d lo = _mm256_castpd256_pd128(v);
  __m128d hi = _mm256_extractf128_pd(v, 1);
  lo = _mm_add_pd(lo, hi);
  __m128d shuf = _mm_unpackhi_pd(lo, lo);
  return _mm_cvtsd_f64(_mm_add_sd(lo, shuf));
}

inline double hmax(__m256d v) {
  __m128d lo = _mm256_castpd256_pd128(v);
  __m128d hi = _mm256_extractf128_pd(v, 1);
  lo = _mm_max_pd(lo, hi);
  __m128d shuf = _mm_unpackhi_pd(lo, lo);
  return _mm_cvtsd_f64(_mm_max_sd(lo, shuf));
}

// clears the sign bit
inline __m256d vabs(__m256d v) {
  return _mm256_andnot_pd(_mm256_set1_pd(-0.0), v);
}

double sum_avx2(const double* x, std::size_t n) {
  __m256d acc = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) acc = _mm256_add_pd(acc, _mm256_loadu_pd(x + i));
  double total = hsum(acc);
  for (; i < n; ++i) total += x[i];
  return total;
}

double dot_avx2(const double* x, const double* y, std::size_t n) {
  __m256d acc = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    acc = _mm256_fmadd_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i), acc);
  }
  double total = hsum(acc);
  for (; i < n; ++i) total += x[i] * y[i];
  return total;
}

double dot3_avx2(const double* x, const double* y, const double* z, std::size_t n) {
  __m256d acc = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    __m256d xy = _mm256_mul_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i));
    acc = _mm256_fmadd_pd(xy, _mm256_loadu_pd(z + i), acc);
  }
  double total = hsum(acc);
  for (; i < n; ++i) total += x[i] * y[i] * z[i];
  return total;
}

void multiply_avx2(const double* x, const double* y, double* out, std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(out + i, _mm256_mul_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
  }
  for (; i < n; ++i) out[i] = x[i] * y[i];
}

void axpy_avx2(double a, const double* x, double* y, std::size_t n) {
  __m256d va = _mm256_set1_pd(a);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(y + i, _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
  }
  for (; i < n; ++i) y[i] += a * x[i];
}

void add_scalar_avx2(const double* x, double c, double* out, std::size_t n) {
  __m256d vc = _mm256_set1_pd(c);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(out + i, _mm256_add_pd(_mm256_loadu_pd(x + i), vc));
  }
  for (; i < n; ++i) out[i] = x[i] + c;
}

double masked_sum_avx2(const double* x, const std::uint8_t* mask, std::size_t n) {
  __m256d acc = _mm256_setzero_pd();
  const __m256i zero = _mm256_setzero_si256();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    std::uint32_t packed;
    std::memcpy(&packed, mask + i, 4);
    // widen 4 mask bytes to 64-bit lanes, keep x where the byte was nonzero
    __m256i lanes = _mm256_cvtepu8_epi64(_mm_cvtsi32_si128(static_cast<int>(packed)));
    __m256d keep = _mm256_castsi256_pd(_mm256_cmpeq_epi64(lanes, zero));
    acc = _mm256_add_pd(acc, _mm256_andnot_pd(keep, _mm256_loadu_pd(x + i)));
  }
  double total = hsum(acc);
  for (; i < n; ++i) {
    if (mask[i]) total += x[i];
  }
  return total;
}

void gather_avx2(const double* x, const std::uint32_t* idx, double* out, std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    __m128i vi = _mm_loadu_si128(reinterpret_cast<const __m128i*>(idx + i));
    _mm256_storeu_pd(out + i, _mm256_i32gather_pd(x, vi, 8));
  }
  for (; i < n; ++i) out[i] = x[idx[i]];
}

void gather_add_scalar_avx2(const double* x, const std::uint32_t* idx, double c,
                            double* out, std::size_t n) {
  __m256d vc = _mm256_set1_pd(c);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    __m128i vi = _mm_loadu_si128(reinterpret_cast<const __m128i*>(idx + i));
    _mm256_storeu_pd(out + i, _mm256_add_pd(_mm256_i32gather_pd(x, vi, 8), vc));
  }
  for (; i < n; ++i) out[i] = x[idx[i]] + c;
}

std::size_t count_abs_ge_avx2(const double* x, double threshold, std::size_t n) {
  __m256d vt = _mm256_set1_pd(threshold);
  std::size_t count = 0;
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    __m256d cmp = _mm256_cmp_pd(vabs(_mm256_loadu_pd(x + i)), vt, _CMP_GE_OQ);
    count += static_cast<std::size_t>(__builtin_popcount(_mm256_movemask_pd(cmp)));
  }
  for (; i < n; ++i) {
    if (std::fabs(x[i]) >= threshold) ++count;
  }
  return count;
}

double max_abs_avx2(const double* x, std::size_t n) {
  __m256d acc = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) acc = _mm256_max_pd(acc, vabs(_mm256_loadu_pd(x + i)));
  double best = hmax(acc);
  for (; i < n; ++i) {
    double a = std::fabs(x[i]);
    if (a > best) best = a;
  }
  return best;
}

}  // namespace

const KernelTable& avx2_table() {
  static const KernelTable table = {
      sum_avx2,
      dot_avx2,
      dot3_avx2,
      multiply_avx2,
      axpy_avx2,
      add_scalar_avx2,
      masked_sum_avx2,
      gather_avx2,
      gather_add_scalar_avx2,
      count_abs_ge_avx2,
      max_abs_avx2,
      "avx2",
  };
  return table;
}

}  // namespace svyperm::kernels

#endif
