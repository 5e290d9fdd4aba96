#include "hydrodiag/simulator.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <optional>
#include <random>
#include <span>
#include <tuple>

namespace hydrodiag {

std::string_view fault_mode_name(FaultMode mode) {
  return mode == FaultMode::JammedOpen ? "open" : "closed";
}

FaultSpec parse_fault(std::string_view text, std::size_t valves_per_dfcu) {
  const auto colon = text.find(':');
  if (colon == std::string_view::npos) {
    throw std::invalid_argument("fault must look like AT3:closed or PB3:open, got '" + std::string(text) + "'");
  }
  FaultSpec fault;
  fault.valve_index = parse_valve_name(text.substr(0, colon), valves_per_dfcu);

  const std::string_view rest = text.substr(colon + 1);
  const auto at_it = std::find(rest.begin(), rest.end(), '@');
  const auto at = at_it == rest.end() ? std::string_view::npos : static_cast<std::size_t>(at_it - rest.begin());
  const std::string_view mode = rest.substr(0, at);
  if (mode == "closed") {
    fault.mode = FaultMode::JammedClosed;
  } else if (mode == "open") {
    fault.mode = FaultMode::JammedOpen;
  } else {
    throw std::invalid_argument("fault mode must be 'open' or 'closed', got '" + std::string(mode) + "'");
  }
  if (at != std::string_view::npos) {
    const std::string_view onset = rest.substr(at + 1);
    auto [ptr, ec] = std::from_chars(onset.data(), onset.data() + onset.size(), fault.onset_sample);
    if (ec != std::errc() || ptr != onset.data() + onset.size()) {
      throw std::invalid_argument("bad fault onset '" + std::string(onset) + "'");
    }
  }
  return fault;
}

std::size_t Scenario::total_samples() const {
  std::size_t n = 0;
  for (const auto& s : steps) n += s.duration;
  return n;
}

void Scenario::validate(const SystemConfig& config) const {
  if (!(sample_period > 0.0)) throw std::invalid_argument("sample_period must be > 0");
  if (!(noise_sigma >= 0.0)) throw std::invalid_argument("noise_sigma must be >= 0");
  if (!(spike_magnitude >= 0.0)) throw std::invalid_argument("spike_magnitude must be >= 0");
  if (!(spike_decay > 0.0)) throw std::invalid_argument("spike_decay must be > 0");
  if (!(supply_pressure > config.tank_pressure)) {
    throw std::invalid_argument("supply_pressure must exceed tank_pressure");
  }
  if (steps.empty()) throw std::invalid_argument("scenario has no steps");
  for (std::size_t i = 0; i < steps.size(); ++i) {
    if (steps[i].duration == 0) throw std::invalid_argument("step " + std::to_string(i) + ": duration must be > 0");
    if (steps[i].valves.size() != config.valve_count()) {
      throw std::invalid_argument("step " + std::to_string(i) + ": valve word has " +
                                  std::to_string(steps[i].valves.size()) + " bits, config needs " +
                                  std::to_string(config.valve_count()));
    }
    if (!std::isfinite(steps[i].force)) throw std::invalid_argument("step " + std::to_string(i) + ": bad force");
  }
}

ValveWord apply_fault(const ValveWord& commanded, const std::vector<FaultSpec>& faults,
                      std::size_t sample_index) {
  std::uint64_t seen = 0;
  for (const auto& f : faults) {
    if (f.valve_index >= commanded.size()) throw std::out_of_range("valve index out of range");
    const std::uint64_t mask = std::uint64_t{1} << f.valve_index;
    if (seen & mask) {
      throw ConflictingFaults("two faults target valve " +
                              valve_name(f.valve_index, commanded.size() / 4));
    }
    seen |= mask;
  }
  ValveWord actual = commanded;
  for (const auto& f : faults) {
    if (sample_index >= f.onset_sample) actual.set(f.valve_index, f.mode == FaultMode::JammedOpen);
  }
  return actual;
}

Trace simulate(const SystemConfig& config, const Scenario& scenario,
               const std::vector<FaultSpec>& faults) {
  config.validate();
  scenario.validate(config);
  // Surfaces index and conflict errors before any solving.
  (void)apply_fault(scenario.steps.front().valves, faults, 0);

  Trace trace;
  trace.sample_period = scenario.sample_period;
  trace.config_digest = config_digest(config);
  trace.samples.reserve(scenario.total_samples());

  std::mt19937_64 rng(scenario.seed);
  std::normal_distribution<double> noise(0.0, 1.0);
  const double sigma = scenario.noise_sigma;

  std::optional<ValveWord> cached_word;
  double cached_force = 0.0;
  SteadyState cached;

  std::optional<ValveWord> previous_command;
  double spike_age = std::numeric_limits<double>::infinity();

  std::size_t k = 0;
  for (const auto& step : scenario.steps) {
    for (std::size_t j = 0; j < step.duration; ++j, ++k) {
      const ValveWord actual = apply_fault(step.valves, faults, k);
      if (!cached_word || *cached_word != actual || cached_force != step.force) {
        try {
          cached = steady_state_solve(config, actual, scenario.supply_pressure, step.force);
        } catch (const SolveError& e) {
          throw SimulationError(k, e.kind(), e.what());
        }
        cached_word = actual;
        cached_force = step.force;
      }

      if (previous_command && *previous_command != step.valves) spike_age = 0.0;
      previous_command = step.valves;
      const double spike = std::isfinite(spike_age)
                               ? scenario.spike_magnitude * std::exp(-spike_age / scenario.spike_decay)
                               : 0.0;
      spike_age += 1.0;

      Sample s;
      s.t = static_cast<double>(k) * scenario.sample_period;
      s.commanded = step.valves;
      s.pressure = cached.pressure;
      s.pressure.p_a += spike;
      s.pressure.p_b += spike;
      if (sigma > 0.0) {
        s.pressure.p_s += sigma * noise(rng);
        s.pressure.p_a += sigma * noise(rng);
        s.pressure.p_b += sigma * noise(rng);
      }
      trace.samples.push_back(std::move(s));
    }
  }
  return trace;
}

namespace {

// Valve i of a DFCU is open in step t of a stroke when bit t of patterns[i] is set.
std::vector<unsigned> stroke_codes(std::span<const unsigned> patterns, std::size_t n, std::size_t len) {
  std::vector<unsigned> codes(len, 0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t t = 0; t < len; ++t) {
      if (patterns[i] >> t & 1u) codes[t] |= 1u << i;
    }
  }
  return codes;
}

// Distinct patterns, neither all-zero nor all-one, in random order.
std::vector<unsigned> random_patterns(std::size_t len, std::mt19937_64& rng) {
  std::vector<unsigned> patterns;
  for (unsigned p = 1; p + 1 < (1u << len); ++p) patterns.push_back(p);
  std::shuffle(patterns.begin(), patterns.end(), rng);
  return patterns;
}

}  // namespace

std::size_t stroke_steps(std::size_t valves_per_dfcu) {
  std::size_t len = 2;
  while ((std::size_t{1} << len) - 2 < valves_per_dfcu) ++len;
  return len;
}

Scenario make_duty_cycle(const SystemConfig& config, const DutyCycleOptions& options) {
  if (!(options.duration > 0.0) || !(options.sample_period > 0.0)) {
    throw std::invalid_argument("duty cycle duration and sample period must be > 0");
  }
  const std::size_t n = config.valves_per_dfcu();
  const std::size_t len = stroke_steps(n);
  const std::size_t base = options.stroke_samples / len;
  if (base == 0 || options.step_jitter >= base) {
    throw std::invalid_argument("duty cycle stroke is too short for its steps");
  }
  const auto total = static_cast<std::size_t>(std::llround(options.duration / options.sample_period));

  std::mt19937_64 rng(options.seed);
  std::uniform_real_distribution<double> force(options.min_force, options.max_force);
  std::uniform_int_distribution<std::ptrdiff_t> jitter(-static_cast<std::ptrdiff_t>(options.step_jitter),
                                                       static_cast<std::ptrdiff_t>(options.step_jitter));

  Scenario scenario;
  scenario.sample_period = options.sample_period;
  scenario.supply_pressure = options.supply_pressure;

  const auto make_step = [&](bool extending, unsigned in_code, unsigned out_code, double f) {
    ScenarioStep step;
    step.valves = ValveWord(config.valve_count());
    step.valves.set_dfcu_code(extending ? Dfcu::PA : Dfcu::PB, in_code);
    step.valves.set_dfcu_code(extending ? Dfcu::BT : Dfcu::AT, out_code);
    // The load always opposes the stroke, which keeps both chambers above tank pressure.
    step.force = extending ? f : -f;
    return step;
  };
  // Both active DFCUs must see at least min_drop in the healthy steady state, otherwise
  // sensor noise dominates the flow they pass.
  const auto well_conditioned = [&](const ScenarioStep& step, bool extending) {
    try {
      const auto ss = steady_state_solve(config, step.valves, options.supply_pressure, step.force);
      return dfcu_pressure_drop(extending ? Dfcu::PA : Dfcu::PB, ss.pressure, config.tank_pressure) >=
                 options.min_drop &&
             dfcu_pressure_drop(extending ? Dfcu::BT : Dfcu::AT, ss.pressure, config.tank_pressure) >=
                 options.min_drop;
    } catch (const SolveError&) {
      return false;
    }
  };
  // Load magnitudes for which a code pair is well conditioned, on a fixed grid. Memoized:
  // the stroke search below revisits the same code pairs many times.
  std::map<std::tuple<bool, unsigned, unsigned>, std::vector<double>> grid_cache;
  const auto feasible_forces = [&](bool extending, unsigned in_code, unsigned out_code) -> const std::vector<double>& {
    const auto key = std::make_tuple(extending, in_code, out_code);
    if (const auto it = grid_cache.find(key); it != grid_cache.end()) return it->second;
    std::vector<double> forces;
    for (int i = 0; i <= 12; ++i) {
      const double f = options.min_force + (options.max_force - options.min_force) * i / 12.0;
      if (well_conditioned(make_step(extending, in_code, out_code, f), extending)) forces.push_back(f);
    }
    return grid_cache.emplace(key, std::move(forces)).first->second;
  };
  // The inlet patterns are random; outlet pattern assignments are searched in random order
  // until every step of the stroke admits a well-conditioned load.
  std::vector<std::vector<unsigned>> assignments;
  {
    std::vector<unsigned> all;
    for (unsigned p = 1; p + 1 < (1u << len); ++p) all.push_back(p);
    do {
      assignments.emplace_back(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(n));
      std::reverse(all.begin() + static_cast<std::ptrdiff_t>(n), all.end());
    } while (std::next_permutation(all.begin(), all.end()));
  }
  const auto draw_stroke = [&](bool extending) {
    for (int attempt = 0; attempt < 100; ++attempt) {
      const auto in = stroke_codes(random_patterns(len, rng), n, len);
      std::shuffle(assignments.begin(), assignments.end(), rng);
      for (const auto& patterns : assignments) {
        const auto out = stroke_codes(patterns, n, len);
        std::vector<ScenarioStep> steps;
        for (std::size_t t = 0; t < len; ++t) {
          const auto& forces = feasible_forces(extending, in[t], out[t]);
          if (forces.empty()) break;
          // A random load between feasible grid neighbours, else a feasible grid point.
          const double f = forces[std::uniform_int_distribution<std::size_t>(0, forces.size() - 1)(rng)];
          auto step = make_step(extending, in[t], out[t], f);
          for (int tries = 0; tries < 8; ++tries) {
            auto candidate = make_step(extending, in[t], out[t], force(rng));
            if (well_conditioned(candidate, extending)) {
              step = std::move(candidate);
              break;
            }
          }
          steps.push_back(std::move(step));
        }
        if (steps.size() == len) return steps;
      }
    }
    throw std::invalid_argument("duty cycle: no well-conditioned stroke found");
  };

  bool extending = std::bernoulli_distribution(0.5)(rng);
  std::size_t k = 0;
  while (k < total) {
    auto steps = draw_stroke(extending);
    std::size_t used = 0;
    for (std::size_t t = 0; t < len && k < total; ++t) {
      const std::size_t planned =
          t + 1 == len ? options.stroke_samples - used : static_cast<std::size_t>(static_cast<std::ptrdiff_t>(base) + jitter(rng));
      steps[t].duration = std::min(planned, total - k);
      used += planned;
      k += steps[t].duration;
      scenario.steps.push_back(std::move(steps[t]));
    }
    extending = !extending;
  }
  return scenario;
}

std::string config_digest(const SystemConfig& config) {
  std::uint64_t h = 1469598103934665603ull;
  const auto feed = [&h](double v) {
    char buf[32];
    const int len = std::snprintf(buf, sizeof buf, "%.17g;", v);
    for (int i = 0; i < len; ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 1099511628211ull;
    }
  };
  feed(config.area_a);
  feed(config.area_b);
  feed(config.tank_pressure);
  feed(config.dp_laminar);
  for (const auto& valves : config.dfcus) {
    feed(static_cast<double>(valves.size()));
    for (const auto& v : valves) {
      feed(v.kv);
      feed(v.alpha);
    }
  }
  char out[17];
  std::snprintf(out, sizeof out, "%016llx", static_cast<unsigned long long>(h));
  return out;
}

}  // namespace hydrodiag
