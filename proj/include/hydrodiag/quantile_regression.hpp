#pragma once

#include <span>
#include <stdexcept>
#include <vector>

#include "hydrodiag/matrix.hpp"

namespace hydrodiag {

class NumericalFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct QuantileRegressionOptions {
  double tau = 0.5;
  double upper_bound = 1.0;  // every coefficient is boxed in [0, upper_bound]
  int max_iterations = 20000;
  double pivot_tolerance = 1e-9;   // relative to the entering column's largest entry
  double cost_tolerance = 1e-12;
  int refactor_interval = 50;      // pivots between re-inversions of the basis
};

struct QuantileRegressionResult {
  std::vector<double> x;
  double objective = 0.0;
  int iterations = 0;
};

/// Check loss sum_i rho_tau(b_i - (A x)_i), rho_tau(u) = u * (tau - [u < 0]).
double quantile_loss(const Matrix& a, std::span<const double> b, std::span<const double> x, double tau);

/// Box-constrained quantile regression
///
///   minimize   sum_i rho_tau(b_i - a_i x)   subject to 0 <= x_j <= upper_bound,
///
/// as the linear program
///
///   minimize   tau 1'r+ + (1 - tau) 1'r-   s.t.  A x + r+ - r- = b,  r+, r- >= 0,
///
/// solved by a bounded-variable primal simplex on a dense tableau. The slack basis
/// (r+ where b >= 0, r- elsewhere) is primal feasible, so no phase one is needed.
/// Entering variables follow Bland's rule; the ratio test prefers large pivots among ties.
/// The basis is re-inverted from the original data periodically and before optimality
/// is accepted.
///
/// Throws std::invalid_argument for bad shapes/tau and NumericalFailure when the
/// iteration budget is exhausted.
QuantileRegressionResult quantile_regression(const Matrix& a, std::span<const double> b,
                                             const QuantileRegressionOptions& options = {});

}  // namespace hydrodiag
