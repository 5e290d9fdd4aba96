#include "hydrodiag/model.hpp"

#include <algorithm>
#include <bit>
#include <cctype>
#include <cmath>
#include <limits>
#include <sstream>

namespace hydrodiag {

std::string_view dfcu_name(Dfcu d) {
  switch (d) {
    case Dfcu::PA: return "PA";
    case Dfcu::BT: return "BT";
    case Dfcu::AT: return "AT";
    case Dfcu::PB: return "PB";
  }
  return "??";
}

std::string valve_name(std::size_t index, std::size_t valves_per_dfcu) {
  return std::string(dfcu_name(kDfcuOrder.at(index / valves_per_dfcu))) +
         std::to_string(index % valves_per_dfcu + 1);
}

std::size_t parse_valve_name(std::string_view name, std::size_t valves_per_dfcu) {
  if (name.size() < 3) throw std::invalid_argument("bad valve name '" + std::string(name) + "'");
  std::string prefix(name.substr(0, 2));
  for (auto& c : prefix) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  const auto it = std::find_if(kDfcuOrder.begin(), kDfcuOrder.end(),
                               [&](Dfcu d) { return dfcu_name(d) == prefix; });
  if (it == kDfcuOrder.end()) throw std::invalid_argument("bad valve name '" + std::string(name) + "'");
  std::size_t pos = 0;
  long number = 0;
  for (char c : name.substr(2)) {
    if (!std::isdigit(static_cast<unsigned char>(c)) || ++pos > 4) {
      throw std::invalid_argument("bad valve name '" + std::string(name) + "'");
    }
    number = number * 10 + (c - '0');
  }
  if (number < 1 || static_cast<std::size_t>(number) > valves_per_dfcu) {
    throw std::invalid_argument("valve index out of range: " + std::string(name));
  }
  return static_cast<std::size_t>(it - kDfcuOrder.begin()) * valves_per_dfcu + (number - 1);
}

// ---------------------------------------------------------------------------
// SystemConfig

const ValveParams& SystemConfig::valve(std::size_t index) const {
  const std::size_t n = valves_per_dfcu();
  return dfcus[index / n][index % n];
}

Dfcu SystemConfig::dfcu_of(std::size_t index) const {
  return kDfcuOrder[index / valves_per_dfcu()];
}

void SystemConfig::validate() const {
  const std::size_t n = dfcus[0].size();
  if (n == 0) throw std::invalid_argument("every DFCU needs at least one valve");
  if (n > kMaxValvesPerDfcu) throw std::invalid_argument("at most 16 valves per DFCU are supported");
  for (Dfcu d : kDfcuOrder) {
    const auto& valves = dfcus[static_cast<int>(d)];
    if (valves.size() != n) {
      throw std::invalid_argument("DFCU " + std::string(dfcu_name(d)) +
                                  " has a different valve count than PA");
    }
    for (std::size_t i = 0; i < valves.size(); ++i) {
      const auto& v = valves[i];
      const std::string id = std::string(dfcu_name(d)) + std::to_string(i + 1);
      if (!(v.kv > 0.0) || !std::isfinite(v.kv)) throw std::invalid_argument(id + ": kv must be > 0");
      if (!(v.alpha > 0.0 && v.alpha <= 1.0)) throw std::invalid_argument(id + ": alpha must be in (0, 1]");
    }
  }
  if (!(area_a > 0.0) || !std::isfinite(area_a)) throw std::invalid_argument("area_a must be > 0");
  if (!(area_b > 0.0) || !std::isfinite(area_b)) throw std::invalid_argument("area_b must be > 0");
  if (!(tank_pressure >= 0.0) || !std::isfinite(tank_pressure)) {
    throw std::invalid_argument("tank_pressure must be >= 0");
  }
  if (!(dp_laminar >= 0.0)) throw std::invalid_argument("dp_laminar must be >= 0");
}

SystemConfig SystemConfig::make_default(std::size_t valves_per_dfcu, double kv_base) {
  SystemConfig config;
  for (auto& valves : config.dfcus) {
    valves.clear();
    double kv = kv_base;
    for (std::size_t i = 0; i < valves_per_dfcu; ++i, kv *= 2.0) valves.push_back({kv, 0.5});
  }
  return config;
}

// ---------------------------------------------------------------------------
// ValveWord

ValveWord::ValveWord(std::size_t size, std::uint64_t bits) : size_(size), bits_(bits) {
  if (size > 64) throw std::invalid_argument("valve word longer than 64 bits");
  if (size < 64 && (bits >> size) != 0) throw std::invalid_argument("valve word has bits beyond its size");
}

ValveWord ValveWord::parse(std::string_view text) {
  std::uint64_t bits = 0;
  std::size_t n = 0;
  for (char c : text) {
    if (c == ' ' || c == '_' || c == '\t') continue;
    if (c != '0' && c != '1') throw std::invalid_argument("valve word may only contain 0 and 1");
    if (n == 64) throw std::invalid_argument("valve word longer than 64 bits");
    if (c == '1') bits |= std::uint64_t{1} << n;
    ++n;
  }
  return ValveWord(n, bits);
}

void ValveWord::set(std::size_t i, bool open) {
  if (i >= size_) throw std::out_of_range("valve index out of range");
  const std::uint64_t mask = std::uint64_t{1} << i;
  bits_ = open ? (bits_ | mask) : (bits_ & ~mask);
}

std::size_t ValveWord::count() const { return static_cast<std::size_t>(std::popcount(bits_)); }

unsigned ValveWord::dfcu_code(Dfcu d) const {
  const std::size_t n = size_ / 4;
  const std::uint64_t mask = (std::uint64_t{1} << n) - 1;
  return static_cast<unsigned>((bits_ >> (static_cast<int>(d) * n)) & mask);
}

void ValveWord::set_dfcu_code(Dfcu d, unsigned code) {
  const std::size_t n = size_ / 4;
  const std::uint64_t mask = (std::uint64_t{1} << n) - 1;
  if ((code & ~mask) != 0) throw std::invalid_argument("DFCU code wider than the DFCU");
  const std::size_t shift = static_cast<int>(d) * n;
  bits_ = (bits_ & ~(mask << shift)) | (std::uint64_t{code} << shift);
}

std::string ValveWord::to_string() const {
  std::string s;
  s.reserve(size_);
  for (std::size_t i = 0; i < size_; ++i) s.push_back((*this)[i] ? '1' : '0');
  return s;
}

// ---------------------------------------------------------------------------
// Flow kernels

double signed_power(double x, double alpha) {
  if (x == 0.0) return 0.0;
  const double m = std::pow(std::abs(x), alpha);
  return x < 0.0 ? -m : m;
}

double orifice_kernel(double dp, double alpha, double dp_laminar) {
  const double a = std::abs(dp);
  if (a >= dp_laminar || alpha == 1.0) return signed_power(dp, alpha);
  // f(x) = c1 x + c3 x^3 with f(d) = d^alpha, f'(d) = alpha d^(alpha-1)
  const double s = std::pow(dp_laminar, alpha - 1.0);
  const double c1 = 0.5 * (3.0 - alpha) * s;
  const double c3 = 0.5 * (alpha - 1.0) * s / (dp_laminar * dp_laminar);
  return dp * (c1 + c3 * dp * dp);
}

double orifice_kernel_derivative(double dp, double alpha, double dp_laminar) {
  const double a = std::abs(dp);
  if (alpha == 1.0) return 1.0;
  if (a >= dp_laminar) return alpha * std::pow(a, alpha - 1.0);
  const double s = std::pow(dp_laminar, alpha - 1.0);
  const double c1 = 0.5 * (3.0 - alpha) * s;
  const double c3 = 0.5 * (alpha - 1.0) * s / (dp_laminar * dp_laminar);
  return c1 + 3.0 * c3 * dp * dp;
}

double valve_flow(bool open, const ValveParams& params, double dp, double dp_laminar) {
  return open ? params.kv * orifice_kernel(dp, params.alpha, dp_laminar) : 0.0;
}

double complement_flow(bool open, const ValveParams& params, double dp, double dp_laminar) {
  return valve_flow(!open, params, dp, dp_laminar);
}

double dfcu_pressure_drop(Dfcu d, const PressureState& p, double tank_pressure) {
  switch (d) {
    case Dfcu::PA: return p.p_s - p.p_a;
    case Dfcu::BT: return p.p_b - tank_pressure;
    case Dfcu::AT: return p.p_a - tank_pressure;
    case Dfcu::PB: return p.p_s - p.p_b;
  }
  return 0.0;
}

DfcuFlows dfcu_flows(const SystemConfig& config, const ValveWord& state, const PressureState& p) {
  if (state.size() != config.valve_count()) throw std::invalid_argument("valve word size does not match config");
  std::array<double, 4> q{};
  const std::size_t n = config.valves_per_dfcu();
  for (Dfcu d : kDfcuOrder) {
    const int di = static_cast<int>(d);
    const double dp = dfcu_pressure_drop(d, p, config.tank_pressure);
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      sum += valve_flow(state[di * n + i], config.dfcus[di][i], dp, config.dp_laminar);
    }
    q[di] = sum;
  }
  DfcuFlows f;
  f.pa = q[static_cast<int>(Dfcu::PA)];
  f.bt = q[static_cast<int>(Dfcu::BT)];
  f.at = q[static_cast<int>(Dfcu::AT)];
  f.pb = q[static_cast<int>(Dfcu::PB)];
  return f;
}

double balance_residual(const SystemConfig& config, const ValveWord& state, const PressureState& p) {
  const DfcuFlows f = dfcu_flows(config, state, p);
  return (f.pa - f.at) / config.area_a + (f.pb - f.bt) / config.area_b;
}

// ---------------------------------------------------------------------------
// Steady state

double open_flow_capacity(const SystemConfig& config, const ValveWord& state, double p_s) {
  const double span = std::max(p_s - config.tank_pressure, config.dp_laminar);
  double cap = 0.0;
  for (std::size_t i = 0; i < state.size(); ++i) {
    if (state[i]) cap += config.valve(i).kv * std::pow(span, config.valve(i).alpha);
  }
  return cap;
}

namespace {

struct Balance {
  double value;       // flow balance in m/s
  double derivative;  // d(value)/d(p_a), with p_b tied to p_a by the force equation
};

class ChamberBalance {
 public:
  ChamberBalance(const SystemConfig& config, const ValveWord& state, double p_s, double force)
      : config_(config), state_(state), p_s_(p_s), force_(force) {}

  double p_b(double p_a) const { return (config_.area_a * p_a - force_) / config_.area_b; }

  Balance operator()(double p_a) const {
    const PressureState p{p_s_, p_a, p_b(p_a)};
    const std::size_t n = config_.valves_per_dfcu();
    double flow_a = 0.0, flow_b = 0.0, dflow_a = 0.0, dflow_b = 0.0;
    for (Dfcu d : kDfcuOrder) {
      const int di = static_cast<int>(d);
      const double dp = dfcu_pressure_drop(d, p, config_.tank_pressure);
      double q = 0.0, dq = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        if (!state_[di * n + i]) continue;
        const auto& v = config_.dfcus[di][i];
        q += v.kv * orifice_kernel(dp, v.alpha, config_.dp_laminar);
        dq += v.kv * orifice_kernel_derivative(dp, v.alpha, config_.dp_laminar);
      }
      // Sign of d(dp)/d(chamber pressure) and of the flow's contribution to the chamber.
      switch (d) {
        case Dfcu::PA: flow_a += q; dflow_a -= dq; break;
        case Dfcu::AT: flow_a -= q; dflow_a -= dq; break;
        case Dfcu::PB: flow_b += q; dflow_b -= dq; break;
        case Dfcu::BT: flow_b -= q; dflow_b -= dq; break;
      }
    }
    const double ratio = config_.area_a / config_.area_b;
    return {flow_a / config_.area_a + flow_b / config_.area_b,
            dflow_a / config_.area_a + dflow_b * ratio / config_.area_b};
  }

 private:
  const SystemConfig& config_;
  const ValveWord& state_;
  double p_s_;
  double force_;
};

}  // namespace

SteadyState steady_state_solve(const SystemConfig& config, const ValveWord& state, double p_s,
                               double force, const SteadyStateOptions& options) {
  if (state.size() != config.valve_count()) throw std::invalid_argument("valve word size does not match config");
  if (!std::isfinite(p_s) || !std::isfinite(force)) throw std::invalid_argument("non-finite supply pressure or force");
  if (state.none()) {
    throw SolveError(SolveErrorKind::SingularSystem, "no open valve: chamber pressures are indeterminate");
  }

  // Eliminating v and p_b leaves one equation in p_a whose left side is strictly decreasing.
  const ChamberBalance balance(config, state, p_s, force);
  const double scale = open_flow_capacity(config, state, p_s) / config.area_b;
  const double span = std::max(p_s - config.tank_pressure, 1e5);

  int iters = 0;
  double x = 0.5 * (p_s + config.tank_pressure);
  Balance g = balance(x);

  double lo = x, hi = x;
  double g_lo = g.value, g_hi = g.value;
  for (double step = span; g_lo < 0.0; step *= 2.0) {
    if (++iters > options.max_iters) break;
    hi = lo, g_hi = g_lo;
    lo -= step;
    g_lo = balance(lo).value;
  }
  for (double step = span; g_hi > 0.0; step *= 2.0) {
    if (++iters > options.max_iters) break;
    lo = hi, g_lo = g_hi;
    hi += step;
    g_hi = balance(hi).value;
  }
  if (g_lo < 0.0 || g_hi > 0.0) {
    throw SolveError(SolveErrorKind::NoConvergence, "failed to bracket the chamber pressure");
  }

  // Newton steps, falling back to bisection when a step leaves the bracket or fails to
  // halve the previous-but-one step.
  bool converged = false;
  double dx_old = hi - lo, dx = dx_old;
  while (iters < options.max_iters) {
    ++iters;
    if (std::abs(g.value) <= options.tolerance * scale) {
      converged = true;
      break;
    }
    if (g.value > 0.0) lo = x; else hi = x;
    const double newton = g.derivative < 0.0 ? x - g.value / g.derivative : lo - 1.0;
    double next;
    if (!(newton > lo && newton < hi) || std::abs(2.0 * (newton - x)) > std::abs(dx_old)) {
      dx_old = dx;
      next = 0.5 * (lo + hi);
    } else {
      dx_old = dx;
      next = newton;
    }
    dx = next - x;
    if (next == x || hi - lo <= 4.0 * std::numeric_limits<double>::epsilon() * std::abs(x)) {
      converged = std::abs(g.value) <= 1e-9 * scale;
      break;
    }
    x = next;
    g = balance(x);
  }
  if (!converged) {
    throw SolveError(SolveErrorKind::NoConvergence,
                     "steady-state iteration did not converge in " + std::to_string(options.max_iters) +
                         " iterations");
  }

  SteadyState ss;
  ss.pressure = {p_s, x, balance.p_b(x)};
  ss.force = force;
  ss.iterations = iters;
  const DfcuFlows f = dfcu_flows(config, state, ss.pressure);
  ss.velocity = (f.pa - f.at) / config.area_a;

  // Rounding in the force equation can leave an exact-zero pressure slightly negative.
  const double slack = 1e-9 * std::max(p_s, 1.0);
  for (double* p : {&ss.pressure.p_a, &ss.pressure.p_b}) {
    if (*p < 0.0 && *p >= -slack) *p = 0.0;
  }
  const auto in_range = [&](double p) { return p >= 0.0 && p <= options.max_pressure; };
  if (!in_range(ss.pressure.p_a) || !in_range(ss.pressure.p_b)) {
    std::ostringstream msg;
    msg << "unphysical steady state: p_a=" << ss.pressure.p_a << " Pa, p_b=" << ss.pressure.p_b << " Pa";
    throw SolveError(SolveErrorKind::OutOfRange, msg.str());
  }
  return ss;
}

std::array<double, 3> steady_state_residuals(const SystemConfig& config, const ValveWord& state,
                                             const SteadyState& ss) {
  const DfcuFlows f = dfcu_flows(config, state, ss.pressure);
  const double qcap = std::max(open_flow_capacity(config, state, ss.pressure.p_s), 1e-300);
  const double fref = config.area_a * std::max(ss.pressure.p_s, 1.0);
  return {(f.pa - f.at - config.area_a * ss.velocity) / qcap,
          (f.pb - f.bt + config.area_b * ss.velocity) / qcap,
          (ss.force - config.area_a * ss.pressure.p_a + config.area_b * ss.pressure.p_b) / fref};
}

}  // namespace hydrodiag
