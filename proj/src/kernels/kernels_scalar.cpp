#include "svyperm/kernels.hpp"

#include <cmath>

namespace svyperm::kernels {
namespace {

double sum_scalar(const double* x, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += x[i];
  return acc;
}

double dot_scalar(const double* x, const double* y, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += x[i] * y[i];
  return acc;
}

double dot3_scalar(const double* x, const double* y, const double* z, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += x[i] * y[i] * z[i];
  return acc;
}

void multiply_scalar(const double* x, const double* y, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = x[i] * y[i];
}

void axpy_scalar(double a, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += a * x[i];
}

void add_scalar_scalar(const double* x, double c, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = x[i] + c;
}

double masked_sum_scalar(const double* x, const std::uint8_t* mask, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (mask[i]) acc += x[i];
  }
  return acc;
}

void gather_scalar(const double* x, const std::uint32_t* idx, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = x[idx[i]];
}

void gather_add_scalar_scalar(const double* x, const std::uint32_t* idx, double c,
                              double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = x[idx[i]] + c;
}

std::size_t count_abs_ge_scalar(const double* x, double threshold, std::size_t n) {
  std::size_t count = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (std::fabs(x[i]) >= threshold) ++count;
  }
  return count;
}

double max_abs_scalar(const double* x, std::size_t n) {
  double best = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double a = std::fabs(x[i]);
    if (a > best) best = a;
  }
  return best;
}

}  // namespace

const KernelTable& scalar_table() {
  static const KernelTable table = {
      sum_scalar,
      dot_scalar,
      dot3_scalar,
      multiply_scalar,
      axpy_scalar,
      add_scalar_scalar,
      masked_sum_scalar,
      gather_scalar,
      gather_add_scalar_scalar,
      count_abs_ge_scalar,
      max_abs_scalar,
      "scalar",
  };
  return table;
}

}  // namespace svyperm::kernels
