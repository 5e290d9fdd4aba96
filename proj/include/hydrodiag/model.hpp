#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace hydrodiag {

/// Flow paths of the four-DFCU actuator, in valve-word order.
enum class Dfcu : int { PA = 0, BT = 1, AT = 2, PB = 3 };

inline constexpr std::array<Dfcu, 4> kDfcuOrder{Dfcu::PA, Dfcu::BT, Dfcu::AT, Dfcu::PB};
inline constexpr std::size_t kMaxValvesPerDfcu = 16;

std::string_view dfcu_name(Dfcu d);

/// "AT3" style name of a valve index in valve-word order.
std::string valve_name(std::size_t index, std::size_t valves_per_dfcu);
/// Inverse of valve_name. Throws std::invalid_argument ("valve index out of range", bad syntax).
std::size_t parse_valve_name(std::string_view name, std::size_t valves_per_dfcu);

struct ValveParams {
  double kv = 1e-8;   // m^3/s/Pa^alpha
  double alpha = 0.5;
};

/// Physical description of the actuator. Validated by `validate()`.
struct SystemConfig {
  std::array<std::vector<ValveParams>, 4> dfcus;  // PA, BT, AT, PB
  double area_a = 2e-3;                           // m^2
  double area_b = 1e-3;                           // m^2
  double tank_pressure = 0.0;                     // Pa
  // Half-width of the smoothed region of the orifice kernel around dp = 0.
  double dp_laminar = 1e3;                        // Pa

  std::size_t valves_per_dfcu() const { return dfcus[0].size(); }
  std::size_t valve_count() const { return 4 * valves_per_dfcu(); }
  const ValveParams& valve(std::size_t index) const;
  Dfcu dfcu_of(std::size_t index) const;

  /// Throws std::invalid_argument describing the first violated invariant.
  void validate() const;

  /// Five valves per DFCU with kv doubling from `kv_base`, alpha = 0.5.
  static SystemConfig make_default(std::size_t valves_per_dfcu = 5, double kv_base = 1e-8);
};

/// Commanded (or actual) open/closed bit per valve, ordered PA1..PAn, BT1.., AT1.., PB1...
class ValveWord {
 public:
  ValveWord() = default;
  explicit ValveWord(std::size_t size, std::uint64_t bits = 0);

  /// Parses a string of '0'/'1' characters; whitespace and '_' are ignored.
  static ValveWord parse(std::string_view text);

  std::size_t size() const { return size_; }
  bool operator[](std::size_t i) const { return (bits_ >> i) & 1u; }
  void set(std::size_t i, bool open);
  bool none() const { return bits_ == 0; }
  std::size_t count() const;
  std::uint64_t bits() const { return bits_; }

  /// Bits of one DFCU packed so that valve 1 is the least significant bit.
  unsigned dfcu_code(Dfcu d) const;
  void set_dfcu_code(Dfcu d, unsigned code);

  std::string to_string() const;

  friend bool operator==(const ValveWord&, const ValveWord&) = default;

 private:
  std::size_t size_ = 0;
  std::uint64_t bits_ = 0;
};

struct PressureState {
  double p_s = 0.0;
  double p_a = 0.0;
  double p_b = 0.0;

  friend bool operator==(const PressureState&, const PressureState&) = default;
};

/// Equilibrium of the actuator. `velocity > 0` extends the piston (chamber A grows).
struct SteadyState {
  PressureState pressure;
  double velocity = 0.0;
  double force = 0.0;
  int iterations = 0;
};

struct DfcuFlows {
  double pa = 0.0;
  double at = 0.0;
  double pb = 0.0;
  double bt = 0.0;
};

/// sign(x) * |x|^alpha
double signed_power(double x, double alpha);

/// Orifice kernel SP(dp)^alpha, replaced inside |dp| < dp_laminar by the odd cubic
/// that matches value and slope at the boundary. dp_laminar = 0 gives the pure kernel.
double orifice_kernel(double dp, double alpha, double dp_laminar);
double orifice_kernel_derivative(double dp, double alpha, double dp_laminar);

double valve_flow(bool open, const ValveParams& params, double dp, double dp_laminar = 1e3);
double complement_flow(bool open, const ValveParams& params, double dp, double dp_laminar = 1e3);

/// Pressure difference driving the flow through a DFCU (upstream minus downstream).
double dfcu_pressure_drop(Dfcu d, const PressureState& p, double tank_pressure);

DfcuFlows dfcu_flows(const SystemConfig& config, const ValveWord& state, const PressureState& p);

/// (Q_PA - Q_AT)/A_A + (Q_PB - Q_BT)/A_B, in m/s.
double balance_residual(const SystemConfig& config, const ValveWord& state, const PressureState& p);

enum class SolveErrorKind { NoConvergence, SingularSystem, OutOfRange };

class SolveError : public std::runtime_error {
 public:
  SolveError(SolveErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  SolveErrorKind kind() const { return kind_; }

 private:
  SolveErrorKind kind_;
};

struct SteadyStateOptions {
  int max_iters = 100;
  double tolerance = 1e-12;     // on the normalized flow balance
  double max_pressure = 100e6;  // Pa; solutions above are reported as OutOfRange
};

/// Solves the three steady-state equations for (v, p_a, p_b).
/// Throws SolveError.
SteadyState steady_state_solve(const SystemConfig& config, const ValveWord& state, double p_s,
                               double force, const SteadyStateOptions& options = {});

/// Normalized residuals of the chamber A flow, chamber B flow and force equations.
/// Flows are scaled by the capacity of the open valves at p_s, force by A_A * p_s.
std::array<double, 3> steady_state_residuals(const SystemConfig& config, const ValveWord& state,
                                             const SteadyState& ss);

/// Flow scale used to normalize residuals: sum of open valves' kv * (p_s - p_T)^alpha.
double open_flow_capacity(const SystemConfig& config, const ValveWord& state, double p_s);

}  // namespace hydrodiag
