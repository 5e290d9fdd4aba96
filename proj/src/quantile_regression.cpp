#include "hydrodiag/quantile_regression.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <string>

namespace hydrodiag {

double quantile_loss(const Matrix& a, std::span<const double> b, std::span<const double> x, double tau) {
  double total = 0.0;
  for (std::size_t i = 0; i < a.rows(); ++i) {
    const auto row = a.row(i);
    double fit = 0.0;
    for (std::size_t j = 0; j < a.cols(); ++j) fit += row[j] * x[j];
    const double u = b[i] - fit;
    total += u >= 0.0 ? tau * u : (tau - 1.0) * u;
  }
  return total;
}

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Tableau state of the bounded-variable simplex. Columns: x (n), r+ (m), r- (m).
class BoundedSimplex {
 public:
  BoundedSimplex(const Matrix& a, std::span<const double> b, const QuantileRegressionOptions& opt)
      : m_(a.rows()),
        n_(a.cols()),
        total_(n_ + 2 * m_),
        opt_(opt),
        tableau_(m_, total_),
        original_(m_, total_),
        rhs_(m_),
        beta_(m_),
        reduced_(total_),
        cost_(total_, 0.0),
        upper_(total_, kInf),
        basis_(m_),
        at_upper_(total_, false) {
    for (std::size_t j = 0; j < n_; ++j) upper_[j] = opt.upper_bound;
    for (std::size_t i = 0; i < m_; ++i) {
      cost_[n_ + i] = opt.tau;
      cost_[n_ + m_ + i] = 1.0 - opt.tau;
    }
    for (std::size_t i = 0; i < m_; ++i) {
      const double sign = b[i] >= 0.0 ? 1.0 : -1.0;
      auto row = tableau_.row(i);
      const auto src = a.row(i);
      for (std::size_t j = 0; j < n_; ++j) row[j] = sign * src[j];
      row[n_ + i] = sign;
      row[n_ + m_ + i] = -sign;
      beta_[i] = sign * b[i];
      basis_[i] = sign > 0.0 ? n_ + i : n_ + m_ + i;
    }
    original_ = tableau_;
    rhs_ = beta_;
    is_basic_.assign(total_, false);
    for (auto v : basis_) is_basic_[v] = true;
    compute_reduced();
  }

  // Optimality is only accepted on a freshly re-inverted tableau, so rounding picked up
  // along a long degenerate pivot sequence cannot end the search early.
  int run() {
    int iterations = 0;
    int since_refactor = 0;
    for (;;) {
      auto entering = choose_entering();
      if (!entering || since_refactor >= opt_.refactor_interval) {
        if (since_refactor > 0) {
          refactor();
          since_refactor = 0;
          entering = choose_entering();
        }
        if (!entering) return iterations;
      }
      if (++iterations > opt_.max_iterations) {
        throw NumericalFailure("simplex iteration budget exhausted (" + std::to_string(opt_.max_iterations) + ")");
      }
      step(*entering);
      ++since_refactor;
    }
  }

  std::vector<double> solution() const {
    std::vector<double> x(n_);
    for (std::size_t j = 0; j < n_; ++j) x[j] = at_upper_[j] ? upper_[j] : 0.0;
    for (std::size_t i = 0; i < m_; ++i) {
      if (basis_[i] < n_) x[basis_[i]] = beta_[i];
    }
    for (auto& v : x) v = std::clamp(v, 0.0, opt_.upper_bound);
    return x;
  }

 private:
  // Bland: the lowest-index nonbasic variable whose move improves the objective.
  std::optional<std::size_t> choose_entering() const {
    for (std::size_t j = 0; j < total_; ++j) {
      if (is_basic_[j]) continue;
      const double d = reduced_[j];
      if ((!at_upper_[j] && d < -opt_.cost_tolerance) || (at_upper_[j] && d > opt_.cost_tolerance)) return j;
    }
    return std::nullopt;
  }

  void step(std::size_t entering) {
    const double dir = at_upper_[entering] ? -1.0 : 1.0;

    double limit = upper_[entering];
    std::size_t leave_row = m_;  // m_ marks a bound flip of the entering variable
    bool leave_to_upper = false;
    std::size_t leave_var = entering;

    double col_scale = 0.0;
    for (std::size_t i = 0; i < m_; ++i) col_scale = std::max(col_scale, std::abs(tableau_(i, entering)));
    const double tol = opt_.pivot_tolerance * std::max(1.0, col_scale);

    // Among (near) tied ratios take the largest pivot; Bland's lowest index only breaks
    // ties between pivots of comparable size.
    double leave_alpha = 0.0;
    for (std::size_t i = 0; i < m_; ++i) {
      const double alpha = dir * tableau_(i, entering);
      double ratio;
      bool to_upper;
      if (alpha > tol) {
        ratio = std::max(beta_[i], 0.0) / alpha;
        to_upper = false;
      } else if (alpha < -tol && std::isfinite(upper_[basis_[i]])) {
        ratio = std::max(upper_[basis_[i]] - beta_[i], 0.0) / -alpha;
        to_upper = true;
      } else {
        continue;
      }
      const double tie = std::isfinite(limit) ? 1e-12 * std::max(1.0, limit) : 0.0;
      bool take = ratio < limit - tie;
      if (!take && ratio <= limit + tie) {
        const double mag = std::abs(alpha);
        take = mag > 10.0 * leave_alpha || (mag * 10.0 >= leave_alpha && basis_[i] < leave_var);
      }
      if (take) {
        limit = ratio;
        leave_row = i;
        leave_to_upper = to_upper;
        leave_var = basis_[i];
        leave_alpha = std::abs(alpha);
      }
    }
    if (!std::isfinite(limit)) throw NumericalFailure("quantile regression LP reported unbounded");

    for (std::size_t i = 0; i < m_; ++i) beta_[i] -= dir * limit * tableau_(i, entering);

    if (leave_row == m_) {
      at_upper_[entering] = !at_upper_[entering];
      return;
    }

    const double start = at_upper_[entering] ? upper_[entering] : 0.0;
    const std::size_t leaving = basis_[leave_row];
    is_basic_[leaving] = false;
    at_upper_[leaving] = leave_to_upper;
    basis_[leave_row] = entering;
    is_basic_[entering] = true;
    at_upper_[entering] = false;
    beta_[leave_row] = start + dir * limit;

    pivot(leave_row, entering);
  }

  void pivot(std::size_t r, std::size_t c) {
    auto prow = tableau_.row(r);
    const double inv = 1.0 / prow[c];
    for (auto& v : prow) v *= inv;
    prow[c] = 1.0;
    for (std::size_t i = 0; i < m_; ++i) {
      if (i == r) continue;
      auto row = tableau_.row(i);
      const double f = row[c];
      if (f == 0.0) continue;
      for (std::size_t j = 0; j < total_; ++j) row[j] -= f * prow[j];
      row[c] = 0.0;
    }
    const double f = reduced_[c];
    for (std::size_t j = 0; j < total_; ++j) reduced_[j] -= f * prow[j];
    reduced_[c] = 0.0;
  }

  void compute_reduced() {
    for (std::size_t j = 0; j < total_; ++j) {
      double d = cost_[j];
      for (std::size_t i = 0; i < m_; ++i) d -= cost_[basis_[i]] * tableau_(i, j);
      reduced_[j] = is_basic_[j] ? 0.0 : d;
    }
  }

  // Rebuilds tableau, basic values and reduced costs from the original rows:
  // tableau = B^-1 [A I -I], beta = B^-1 (b - sum of nonbasic columns at their upper bound).
  void refactor() {
    Matrix work(m_, m_ + total_ + 1);
    for (std::size_t i = 0; i < m_; ++i) {
      auto row = work.row(i);
      const auto src = original_.row(i);
      for (std::size_t k = 0; k < m_; ++k) row[k] = src[basis_[k]];
      double rhs = rhs_[i];
      for (std::size_t j = 0; j < total_; ++j) {
        row[m_ + j] = src[j];
        if (!is_basic_[j] && at_upper_[j]) rhs -= src[j] * upper_[j];
      }
      row[m_ + total_] = rhs;
    }
    // Gauss-Jordan with partial pivoting; column k of B belongs to basis row k.
    std::vector<std::size_t> perm(m_);
    for (std::size_t i = 0; i < m_; ++i) perm[i] = i;
    for (std::size_t k = 0; k < m_; ++k) {
      std::size_t best = k;
      for (std::size_t i = k + 1; i < m_; ++i) {
        if (std::abs(work(i, k)) > std::abs(work(best, k))) best = i;
      }
      if (!(std::abs(work(best, k)) > 1e-13)) throw NumericalFailure("simplex basis became singular");
      if (best != k) {
        auto a = work.row(k), b = work.row(best);
        std::swap_ranges(a.begin(), a.end(), b.begin());
      }
      auto prow = work.row(k);
      const double inv = 1.0 / prow[k];
      for (auto& v : prow) v *= inv;
      for (std::size_t i = 0; i < m_; ++i) {
        if (i == k) continue;
        auto row = work.row(i);
        const double f = row[k];
        if (f == 0.0) continue;
        for (std::size_t j = k; j < row.size(); ++j) row[j] -= f * prow[j];
      }
    }
    for (std::size_t k = 0; k < m_; ++k) {
      const auto src = work.row(k);
      auto dst = tableau_.row(k);
      std::copy(src.begin() + m_, src.begin() + m_ + total_, dst.begin());
      beta_[k] = src[m_ + total_];
    }
    compute_reduced();
  }

  std::size_t m_, n_, total_;
  QuantileRegressionOptions opt_;
  Matrix tableau_;
  Matrix original_;
  std::vector<double> rhs_;
  std::vector<double> beta_;
  std::vector<double> reduced_;
  std::vector<double> cost_;
  std::vector<double> upper_;
  std::vector<std::size_t> basis_;
  std::vector<bool> at_upper_;
  std::vector<bool> is_basic_;
};

}  // namespace

QuantileRegressionResult quantile_regression(const Matrix& a, std::span<const double> b,
                                             const QuantileRegressionOptions& options) {
  if (b.size() != a.rows()) throw std::invalid_argument("rhs length does not match matrix rows");
  if (!(options.tau > 0.0 && options.tau < 1.0)) throw std::invalid_argument("tau must be in (0, 1)");
  if (!(options.upper_bound > 0.0)) throw std::invalid_argument("upper_bound must be > 0");
  for (double v : a.data()) {
    if (!std::isfinite(v)) throw std::invalid_argument("matrix has non-finite entries");
  }
  for (double v : b) {
    if (!std::isfinite(v)) throw std::invalid_argument("rhs has non-finite entries");
  }

  QuantileRegressionResult result;
  if (a.cols() == 0 || a.rows() == 0) {
    result.x.assign(a.cols(), 0.0);
    result.objective = quantile_loss(a, b, result.x, options.tau);
    return result;
  }
  BoundedSimplex simplex(a, b, options);
  result.iterations = simplex.run();
  result.x = simplex.solution();
  result.objective = quantile_loss(a, b, result.x, options.tau);
  return result;
}

}  // namespace hydrodiag
