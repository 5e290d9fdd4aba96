#include "hydrodiag/estimator.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>

namespace hydrodiag {

double FaultVariables::operator[](std::size_t column) const {
  const std::size_t n = x_open.size();
  return column < n ? x_open[column] : x_closed[column - n];
}

FaultVariables FaultVariables::from_columns(std::span<const double> x) {
  FaultVariables v(x.size() / 2);
  std::copy(x.begin(), x.begin() + x.size() / 2, v.x_open.begin());
  std::copy(x.begin() + x.size() / 2, x.end(), v.x_closed.begin());
  return v;
}

namespace {

// Coefficient of x_open for a valve of this DFCU, per unit flow. x_closed uses the negation.
double open_weight(const SystemConfig& config, Dfcu d) {
  switch (d) {
    case Dfcu::PA: return 1.0 / config.area_a;
    case Dfcu::BT: return -1.0 / config.area_b;
    case Dfcu::AT: return -1.0 / config.area_a;
    case Dfcu::PB: return 1.0 / config.area_b;
  }
  return 0.0;
}

}  // namespace

SensingRow sensing_row(const SystemConfig& config, const PressureState& pressures, const ValveWord& commanded) {
  const std::size_t valves = config.valve_count();
  if (commanded.size() != valves) throw std::invalid_argument("valve word size does not match config");
  const std::size_t n = config.valves_per_dfcu();

  SensingRow row;
  row.coefficients.assign(2 * valves, 0.0);
  for (Dfcu d : kDfcuOrder) {
    const int di = static_cast<int>(d);
    const double dp = dfcu_pressure_drop(d, pressures, config.tank_pressure);
    const double w = open_weight(config, d);
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t v = di * n + i;
      const bool open = commanded[v];
      row.coefficients[v] = w * valve_flow(open, config.dfcus[di][i], dp, config.dp_laminar);
      row.coefficients[valves + v] = -w * complement_flow(open, config.dfcus[di][i], dp, config.dp_laminar);
    }
  }
  row.rhs = balance_residual(config, commanded, pressures);
  return row;
}

SensingSystem build_system(const SystemConfig& config, std::span<const Sample> samples,
                           const PenaltyConfig& penalty) {
  if (samples.empty()) throw EmptyPeriod();
  const std::size_t k = samples.size();
  const std::size_t cols = 2 * config.valve_count();

  SensingSystem sys;
  sys.data_rows = k;
  sys.matrix = Matrix(k + cols, cols);
  sys.rhs.assign(k + cols, 0.0);
  sys.row_meta.resize(k);

  std::vector<double> abs_sum(cols, 0.0);
  std::vector<std::size_t> support(cols, 0);
  for (std::size_t r = 0; r < k; ++r) {
    const SensingRow row = sensing_row(config, samples[r].pressure, samples[r].commanded);
    auto dst = sys.matrix.row(r);
    for (std::size_t c = 0; c < cols; ++c) {
      dst[c] = row.coefficients[c];
      if (row.coefficients[c] != 0.0) {
        abs_sum[c] += std::abs(row.coefficients[c]);
        ++support[c];
      }
    }
    sys.rhs[r] = row.rhs;
    sys.row_meta[r] = r;
  }

  std::vector<double> mean_flow(cols, 0.0);
  for (std::size_t c = 0; c < cols; ++c) {
    if (support[c] > 0) mean_flow[c] = abs_sum[c] / static_cast<double>(support[c]);
  }
  sys.scale = *std::max_element(mean_flow.begin(), mean_flow.end());
  if (!(sys.scale > penalty.degenerate_scale)) {
    sys.uninformative = true;
    sys.scale = 1.0;
  }

  const double inv = 1.0 / sys.scale;
  for (std::size_t r = 0; r < k; ++r) {
    for (auto& v : sys.matrix.row(r)) v *= inv;
    sys.rhs[r] *= inv;
  }

  const std::size_t valves = config.valve_count();
  sys.penalties.assign(cols, 0.0);
  for (std::size_t c = 0; c < cols; ++c) {
    sys.penalties[c] = c < valves ? penalty.open_gain * mean_flow[c] * inv : penalty.closed_penalty;
  }
  // Columns without any evidence get the strongest penalty of the period.
  const double floor = *std::max_element(sys.penalties.begin(), sys.penalties.end());
  for (std::size_t c = 0; c < cols; ++c) {
    if (support[c] == 0) sys.penalties[c] = floor;
    sys.matrix(k + c, c) = sys.penalties[c];
  }
  return sys;
}

std::vector<std::vector<std::size_t>> proportional_groups(const SensingSystem& system, double rel_tol) {
  const std::size_t cols = system.matrix.cols();
  const std::size_t k = system.data_rows;
  std::vector<double> norm(cols, 0.0);
  for (std::size_t r = 0; r < k; ++r) {
    for (std::size_t c = 0; c < cols; ++c) norm[c] += std::abs(system.matrix(r, c));
  }
  // Columns a and b tie when b = (n_b / n_a) a on every data row and their penalties scale
  // the same way; then any shift of n-weighted mass between them keeps Ax and the objective.
  const auto ties = [&](std::size_t a, std::size_t b) {
    if (!(norm[a] > 0.0) || !(norm[b] > 0.0)) return false;
    const double ratio = norm[b] / norm[a];
    if (std::abs(system.penalties[b] - ratio * system.penalties[a]) > rel_tol * system.penalties[b]) return false;
    for (std::size_t r = 0; r < k; ++r) {
      const double va = system.matrix(r, a), vb = system.matrix(r, b);
      if (std::abs(vb - ratio * va) > rel_tol * std::max(std::abs(vb), std::abs(ratio * va))) return false;
    }
    return true;
  };
  std::vector<bool> taken(cols, false);
  std::vector<std::vector<std::size_t>> groups;
  for (std::size_t a = 0; a < cols; ++a) {
    if (taken[a]) continue;
    std::vector<std::size_t> group{a};
    for (std::size_t b = a + 1; b < cols; ++b) {
      if (!taken[b] && ties(a, b)) group.push_back(b);
    }
    if (group.size() < 2) continue;
    for (auto c : group) taken[c] = true;
    groups.push_back(std::move(group));
  }
  return groups;
}

void concentrate_ties(const SensingSystem& system, std::span<double> x, double rel_tol) {
  const std::size_t k = system.data_rows;
  for (const auto& group : proportional_groups(system, rel_tol)) {
    std::vector<double> norm(group.size(), 0.0);
    double mass = 0.0;
    for (std::size_t i = 0; i < group.size(); ++i) {
      for (std::size_t r = 0; r < k; ++r) norm[i] += std::abs(system.matrix(r, group[i]));
      mass += norm[i] * x[group[i]];
    }
    for (auto c : group) x[c] = 0.0;
    // A single full jam explains the mass best with the member whose capacity matches it;
    // whatever is left goes to the largest members, where it shows as small values.
    std::vector<bool> used(group.size(), false);
    bool first = true;
    while (mass > 1e-12 * (norm.empty() ? 1.0 : *std::max_element(norm.begin(), norm.end()))) {
      std::size_t pick = group.size();
      for (std::size_t i = 0; i < group.size(); ++i) {
        if (used[i]) continue;
        if (pick == group.size()) {
          pick = i;
        } else if (first) {
          if (std::abs(std::log(mass / norm[i])) < std::abs(std::log(mass / norm[pick]))) pick = i;
        } else if (norm[i] > norm[pick]) {
          pick = i;
        }
      }
      if (pick == group.size()) break;
      used[pick] = true;
      first = false;
      const double share = std::min(1.0, mass / norm[pick]);
      x[group[pick]] = share;
      mass -= share * norm[pick];
    }
  }
}

FaultEstimate estimate_faults(const SensingSystem& system, double tau, bool resolve_ties) {
  FaultEstimate est;
  const std::size_t cols = system.matrix.cols();
  if (system.uninformative) {
    est.variables = FaultVariables(cols / 2);
    est.uninformative = true;
    return est;
  }
  QuantileRegressionOptions options;
  options.tau = tau;
  auto result = quantile_regression(system.matrix, system.rhs, options);
  if (resolve_ties) concentrate_ties(system, result.x);
  est.variables = FaultVariables::from_columns(result.x);
  est.objective = result.objective;
  est.iterations = result.iterations;
  return est;
}

void write_sensing_csv(std::ostream& out, const SensingSystem& system, std::size_t valves_per_dfcu) {
  const std::size_t cols = system.matrix.cols();
  const std::size_t valves = cols / 2;
  out << "row,sample,kind";
  for (std::size_t c = 0; c < cols; ++c) {
    out << (c < valves ? ",xo_" : ",xc_") << valve_name(c % valves, valves_per_dfcu);
  }
  out << ",rhs\n";
  char buf[32];
  for (std::size_t r = 0; r < system.matrix.rows(); ++r) {
    const bool data = r < system.data_rows;
    out << r << ',';
    if (data) out << system.row_meta[r];
    out << ',' << (data ? "data" : "penalty");
    for (double v : system.matrix.row(r)) {
      std::snprintf(buf, sizeof buf, ",%.9g", v);
      out << buf;
    }
    std::snprintf(buf, sizeof buf, ",%.9g\n", system.rhs[r]);
    out << buf;
  }
}

}  // namespace hydrodiag
