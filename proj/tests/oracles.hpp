#pragma once

// Reference computations used to check the library. None of them call into the code
// under test: they re-derive results from first principles, slowly.

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <vector>

namespace oracle {

using Rows = std::vector<std::vector<double>>;

inline double check_loss(const Rows& a, const std::vector<double>& b, const std::vector<double>& x, double tau) {
  double total = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    double r = b[i];
    for (std::size_t j = 0; j < x.size(); ++j) r -= a[i][j] * x[j];
    total += r >= 0.0 ? tau * r : (tau - 1.0) * r;
  }
  return total;
}

// Solves a 3x3 system by Cramer's rule; false when (nearly) singular.
inline bool solve3(const std::array<std::array<double, 3>, 3>& m, const std::array<double, 3>& rhs,
                   std::array<double, 3>& x) {
  const auto det = [](const std::array<std::array<double, 3>, 3>& a) {
    return a[0][0] * (a[1][1] * a[2][2] - a[1][2] * a[2][1]) - a[0][1] * (a[1][0] * a[2][2] - a[1][2] * a[2][0]) +
           a[0][2] * (a[1][0] * a[2][1] - a[1][1] * a[2][0]);
  };
  const double d = det(m);
  if (std::abs(d) < 1e-12) return false;
  for (int k = 0; k < 3; ++k) {
    auto mk = m;
    for (int i = 0; i < 3; ++i) mk[i][k] = rhs[i];
    x[k] = det(mk) / d;
  }
  return true;
}

// Exact minimum of the box-constrained check loss for three variables. The objective is
// piecewise linear and convex, so a minimizer lies at a vertex where three of the
// hyperplanes {a_i x = b_i} and {x_j = 0}, {x_j = 1} intersect; enumerate them all.
inline double vertex_minimum(const Rows& a, const std::vector<double>& b, double tau) {
  struct Plane {
    std::array<double, 3> n;
    double c;
  };
  std::vector<Plane> planes;
  for (std::size_t i = 0; i < a.size(); ++i) planes.push_back({{a[i][0], a[i][1], a[i][2]}, b[i]});
  for (int j = 0; j < 3; ++j) {
    std::array<double, 3> e{};
    e[j] = 1.0;
    planes.push_back({e, 0.0});
    planes.push_back({e, 1.0});
  }
  double best = std::numeric_limits<double>::infinity();
  const std::size_t p = planes.size();
  for (std::size_t i = 0; i < p; ++i) {
    for (std::size_t j = i + 1; j < p; ++j) {
      for (std::size_t k = j + 1; k < p; ++k) {
        std::array<double, 3> x;
        if (!solve3({planes[i].n, planes[j].n, planes[k].n}, {planes[i].c, planes[j].c, planes[k].c}, x)) continue;
        bool inside = true;
        for (double v : x) inside = inside && v >= -1e-9 && v <= 1.0 + 1e-9;
        if (!inside) continue;
        std::vector<double> xv(x.begin(), x.end());
        for (auto& v : xv) v = std::clamp(v, 0.0, 1.0);
        best = std::min(best, check_loss(a, b, xv, tau));
      }
    }
  }
  return best;
}

struct GridResult {
  double minimum;
  double lipschitz_gap;  // the true minimum is at least minimum - lipschitz_gap
};

// Brute-force minimum over the grid {0, h, ..., 1}^3.
inline GridResult grid_minimum(const Rows& a, const std::vector<double>& b, double tau, double h) {
  const int steps = static_cast<int>(std::lround(1.0 / h));
  double best = std::numeric_limits<double>::infinity();
  std::vector<double> x(3);
  for (int i = 0; i <= steps; ++i) {
    for (int j = 0; j <= steps; ++j) {
      for (int k = 0; k <= steps; ++k) {
        x = {i * h, j * h, k * h};
        best = std::min(best, check_loss(a, b, x, tau));
      }
    }
  }
  // Every point is within h/2 of a grid point in each coordinate, and the loss changes by
  // at most max(tau, 1 - tau) * sum_ij |a_ij| * h/2 over such a move.
  double l1 = 0.0;
  for (const auto& row : a) {
    for (double v : row) l1 += std::abs(v);
  }
  return {best, std::max(tau, 1.0 - tau) * l1 * h / 2.0};
}

inline double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  return v[v.size() / 2];
}

// Turbulent orifice: q = kv * sign(dp) * |dp|^alpha, valid outside the smoothed band.
inline double orifice(double kv, double alpha, double dp) {
  return (dp < 0.0 ? -kv : kv) * std::pow(std::abs(dp), alpha);
}

inline double ewma_step_response(double c, double lambda, int k) { return c * (1.0 - std::pow(1.0 - lambda, k)); }

}  // namespace oracle
