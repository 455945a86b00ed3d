#pragma once

#include <vector>

#include "svyperm/dataset.hpp"

namespace svyperm {

struct FittedLinearModel {
  std::vector<double> beta;       // length p, intercept first
  std::vector<double> residuals;  // y - X beta, length n
  double gram_condition = 1.0;    // squared R-diagonal ratio, see fit_wls
};

// Weighted least squares through Householder QR on the sqrt(w)-scaled
// design. gram_condition estimates cond(X' W X) as
// (max |R_kk| / min |R_kk|)^2; fits with gram_condition > 1e12 (or an
// exactly rank-deficient design) throw SingularMatrixError.
FittedLinearModel fit_wls(const SurveyDataset& d);

// Weighted residual moments sum_i w_i r_i x_ik, one per column. Zero up to
// rounding for a model fitted on d.
std::vector<double> residual_orthogonality(const FittedLinearModel& m, const SurveyDataset& d);

// Acceptable rounding slack per column: 1e-8 * sum(w) * max|x_k| * sd(y).
std::vector<double> orthogonality_tolerances(const SurveyDataset& d);

}  // namespace svyperm
