#include "svyperm/estimator.hpp"

#include <cmath>
#include <limits>

#include "svyperm/errors.hpp"
#include "svyperm/kernels.hpp"

namespace svyperm {

namespace {
constexpr double kConditionLimit = 1e12;
}

FittedLinearModel fit_wls(const SurveyDataset& d) {
  const std::size_t n = d.n();
  const std::size_t p = d.p();
  if (n < p) {
    throw SingularMatrixError("fit_wls: fewer rows than columns (" + std::to_string(n) + " < " +
                                  std::to_string(p) + ")",
                              std::numeric_limits<double>::infinity());
  }

  std::vector<double> sw(n);
  for (std::size_t i = 0; i < n; ++i) sw[i] = std::sqrt(d.w()[i]);

  // column-major sqrt(w)-scaled design, transformed in place
  std::vector<std::vector<double>> a(p, std::vector<double>(n));
  for (std::size_t k = 0; k < p; ++k) {
    kernels::multiply(sw.data(), d.x_col(k).data(), a[k].data(), n);
  }
  std::vector<double> b(n);
  kernels::multiply(sw.data(), d.y().data(), b.data(), n);

  // Householder QR; columns at and below the diagonal hold the reflector,
  // rdiag the R diagonal, entries above the diagonal the rest of R.
  std::vector<double> rdiag(p);
  for (std::size_t k = 0; k < p; ++k) {
    double* ak = a[k].data() + k;
    const std::size_t len = n - k;
    double nrm = std::sqrt(kernels::dot(ak, ak, len));
    if (nrm == 0.0) {
      rdiag[k] = 0.0;
      continue;
    }
    if (ak[0] < 0.0) nrm = -nrm;
    for (std::size_t i = 0; i < len; ++i) ak[i] /= nrm;
    ak[0] += 1.0;
    for (std::size_t j = k + 1; j < p; ++j) {
      double* aj = a[j].data() + k;
      double s = -kernels::dot(ak, aj, len) / ak[0];
      kernels::axpy(s, ak, aj, len);
    }
    double s = -kernels::dot(ak, b.data() + k, len) / ak[0];
    kernels::axpy(s, ak, b.data() + k, len);
    rdiag[k] = -nrm;
  }

  double max_r = 0.0;
  double min_r = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < p; ++k) {
    double v = std::fabs(rdiag[k]);
    if (v > max_r) max_r = v;
    if (v < min_r) min_r = v;
  }
  double cond = (min_r == 0.0) ? std::numeric_limits<double>::infinity()
                               : (max_r / min_r) * (max_r / min_r);
  if (!(cond <= kConditionLimit)) {
    throw SingularMatrixError("fit_wls: design matrix numerically singular, gram condition " +
                                  std::to_string(cond),
                              cond);
  }

  FittedLinearModel m;
  m.gram_condition = cond;
  m.beta.assign(p, 0.0);
  for (std::size_t k = p; k-- > 0;) {
    double s = b[k];
    for (std::size_t j = k + 1; j < p; ++j) s -= a[j][k] * m.beta[j];
    m.beta[k] = s / rdiag[k];
  }

  m.residuals.assign(d.y().begin(), d.y().end());
  for (std::size_t k = 0; k < p; ++k) {
    kernels::axpy(-m.beta[k], d.x_col(k).data(), m.residuals.data(), n);
  }
  return m;
}

std::vector<double> residual_orthogonality(const FittedLinearModel& m, const SurveyDataset& d) {
  if (m.residuals.size() != d.n() || m.beta.size() != d.p()) {
    throw SchemaError("residual_orthogonality: model and dataset shapes differ");
  }
  std::vector<double> moments(d.p());
  for (std::size_t k = 0; k < d.p(); ++k) {
    moments[k] = kernels::dot3(d.w().data(), m.residuals.data(), d.x_col(k).data(), d.n());
  }
  return moments;
}

std::vector<double> orthogonality_tolerances(const SurveyDataset& d) {
  const std::size_t n = d.n();
  double sum_w = kernels::sum(d.w().data(), n);
  double mean_y = kernels::sum(d.y().data(), n) / static_cast<double>(n);
  double ss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double dev = d.y()[i] - mean_y;
    ss += dev * dev;
  }
  double sd_y = std::sqrt(ss / static_cast<double>(n));
  std::vector<double> tol(d.p());
  for (std::size_t k = 0; k < d.p(); ++k) {
    tol[k] = 1e-8 * sum_w * kernels::max_abs(d.x_col(k).data(), n) * sd_y;
  }
  return tol;
}

}  // namespace svyperm
