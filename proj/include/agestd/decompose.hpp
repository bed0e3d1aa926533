#pragma once

// Expresses a reference structure as a linear combination of the study's own
// structures, n ~ N c, by least squares without intercept.

#include <Eigen/Dense>

#include <cmath>
#include <string>
#include <vector>

#include "agestd/errors.hpp"
#include "agestd/rates.hpp"

namespace agestd {

struct DecompositionResult {
  std::vector<double> coefficients;  // one per population, study order
  double residual_norm = 0.0;        // ||n - N c||_2
  double abs_coefficient_sum = 0.0;  // sum |c_i|
};

/// Least-squares coefficients c minimizing ||target - N c||, via
/// column-pivoted QR. Throws IllPosedDecompositionError if N has dependent
/// columns (rank cut at 1e-10 times the largest column norm).
inline DecompositionResult decompose_reference(const StudyMatrix& study,
                                               const PopulationStructure& target) {
  detail::require_same_schedule(study.schedule(), target.schedule(), "decomposition");
  const auto A = static_cast<Eigen::Index>(study.age_groups());
  const auto p = static_cast<Eigen::Index>(study.size());

  Eigen::MatrixXd N(A, p);
  for (Eigen::Index j = 0; j < p; ++j)
    for (Eigen::Index a = 0; a < A; ++a)
      N(a, j) = study[static_cast<std::size_t>(j)].structure()[static_cast<std::size_t>(a)];
  Eigen::VectorXd n(A);
  for (Eigen::Index a = 0; a < A; ++a) n(a) = target[static_cast<std::size_t>(a)];

  // With column pivoting the first pivot is the largest column norm, so a
  // relative threshold on pivots is relative to that norm.
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(N);
  qr.setThreshold(1e-10);
  if (qr.rank() < p) {
    std::vector<std::string> dependent;
    const auto& perm = qr.colsPermutation().indices();
    for (Eigen::Index k = qr.rank(); k < p; ++k)
      dependent.push_back(study[static_cast<std::size_t>(perm(k))].id());
    std::string names;
    for (const auto& d : dependent) names += (names.empty() ? "" : ", ") + d;
    throw IllPosedDecompositionError("structure matrix has rank " + std::to_string(qr.rank()) +
                                         " < " + std::to_string(p) +
                                         "; linearly dependent: " + names,
                                     std::move(dependent));
  }

  const Eigen::VectorXd c = qr.solve(n);
  DecompositionResult out;
  out.coefficients.assign(c.data(), c.data() + c.size());
  out.residual_norm = (n - N * c).norm();
  out.abs_coefficient_sum = c.cwiseAbs().sum();
  return out;
}

}  // namespace agestd
