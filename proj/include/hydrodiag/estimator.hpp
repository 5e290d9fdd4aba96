#pragma once

#include <iosfwd>
#include <span>
#include <vector>

#include "hydrodiag/matrix.hpp"
#include "hydrodiag/model.hpp"
#include "hydrodiag/quantile_regression.hpp"
#include "hydrodiag/simulator.hpp"

namespace hydrodiag {

/// Per-valve deviation estimates in [0, 1], both in valve-word order.
/// x_open -> 1: the valve does not open when commanded (jammed closed).
/// x_closed -> 1: the valve does not close when commanded (jammed open).
struct FaultVariables {
  std::vector<double> x_open;
  std::vector<double> x_closed;

  FaultVariables() = default;
  explicit FaultVariables(std::size_t valves) : x_open(valves, 0.0), x_closed(valves, 0.0) {}

  std::size_t valve_count() const { return x_open.size(); }
  /// Column order of the sensing matrix: all x_open, then all x_closed.
  double operator[](std::size_t column) const;
  static FaultVariables from_columns(std::span<const double> x);
};

/// One data row: 8N signed per-valve flows (m/s) and the balance residual.
struct SensingRow {
  std::vector<double> coefficients;
  double rhs = 0.0;
};

SensingRow sensing_row(const SystemConfig& config, const PressureState& pressures, const ValveWord& commanded);

struct PenaltyConfig {
  double open_gain = 1.0;        // multiplies the averaged-flow penalties of the x_open columns
  double closed_penalty = 1.0;   // x_closed penalty, in normalized flow units
  double degenerate_scale = 1e-9;  // m/s; below this the period carries no flow information
};

/// Stacked data rows followed by an 8N x 8N diagonal penalty block, all divided by
/// `scale` (the largest per-column mean |q|) so the penalty entries are dimensionless.
struct SensingSystem {
  Matrix matrix;
  std::vector<double> rhs;
  std::vector<std::size_t> row_meta;  // sample position per data row
  std::vector<double> penalties;      // diagonal of the penalty block
  std::size_t data_rows = 0;
  double scale = 0.0;
  bool uninformative = false;
};

class EmptyPeriod : public std::invalid_argument {
 public:
  EmptyPeriod() : std::invalid_argument("cannot build a sensing system from an empty period") {}
};

SensingSystem build_system(const SystemConfig& config, std::span<const Sample> samples,
                           const PenaltyConfig& penalty = {});

struct FaultEstimate {
  FaultVariables variables;
  bool uninformative = false;
  double objective = 0.0;
  int iterations = 0;
};

/// Groups (size >= 2) of columns that are exact multiples of each other on every data row,
/// with penalties in the same ratio. Valves of one DFCU commanded identically throughout a
/// period form such groups, because their flows differ only by capacity.
std::vector<std::vector<std::size_t>> proportional_groups(const SensingSystem& system, double rel_tol = 1e-9);

/// Within each proportional group the optimum is a whole face: only the capacity-weighted
/// sum of the group's variables is determined. Moves that sum onto the member whose
/// capacity best matches it (a single, full jam), remainder to the largest members.
/// The objective and Ax are unchanged.
void concentrate_ties(const SensingSystem& system, std::span<double> x, double rel_tol = 1e-9);

/// Solves the sensing system by box-constrained quantile regression, then applies
/// concentrate_ties unless disabled. Uninformative systems return all zeros without
/// solving. Throws NumericalFailure.
FaultEstimate estimate_faults(const SensingSystem& system, double tau = 0.5, bool resolve_ties = true);

/// CSV dump: one line per row, `row,sample,kind,c0..c{8N-1},rhs`.
void write_sensing_csv(std::ostream& out, const SensingSystem& system, std::size_t valves_per_dfcu);

}  // namespace hydrodiag
