#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "hydrodiag/model.hpp"

namespace hydrodiag {

enum class FaultMode { JammedOpen, JammedClosed };

std::string_view fault_mode_name(FaultMode mode);  // "open" / "closed"

/// Ground-truth fault injected into a simulation. Never stored in a Trace.
struct FaultSpec {
  std::size_t valve_index = 0;
  FaultMode mode = FaultMode::JammedClosed;
  std::size_t onset_sample = 0;

  friend bool operator==(const FaultSpec&, const FaultSpec&) = default;
};

/// Parses the CLI shorthand "AT3:closed" / "PB3:open", optionally "AT3:closed@250".
FaultSpec parse_fault(std::string_view text, std::size_t valves_per_dfcu);

class ConflictingFaults : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct ScenarioStep {
  std::size_t duration = 1;  // samples
  ValveWord valves;
  double force = 0.0;        // N
};

struct Scenario {
  std::vector<ScenarioStep> steps;
  double sample_period = 0.01;     // s
  double supply_pressure = 10e6;   // Pa
  double noise_sigma = 20e3;       // Pa
  double spike_magnitude = 0.5e6;  // Pa, added to p_a and p_b at each command change
  double spike_decay = 3.0;        // samples
  std::uint64_t seed = 1;

  std::size_t total_samples() const;
  void validate(const SystemConfig& config) const;
};

struct Sample {
  double t = 0.0;
  PressureState pressure;
  ValveWord commanded;

  friend bool operator==(const Sample&, const Sample&) = default;
};

struct Trace {
  std::vector<Sample> samples;
  std::string config_digest;
  double sample_period = 0.01;
};

/// Actual valve word at `sample_index` given the commanded word. Throws ConflictingFaults
/// when two faults target one valve and std::out_of_range for a bad valve index.
ValveWord apply_fault(const ValveWord& commanded, const std::vector<FaultSpec>& faults,
                      std::size_t sample_index);

class SimulationError : public std::runtime_error {
 public:
  SimulationError(std::size_t sample_index, SolveErrorKind kind, const std::string& what)
      : std::runtime_error("sample " + std::to_string(sample_index) + ": " + what),
        sample_index_(sample_index),
        kind_(kind) {}
  std::size_t sample_index() const { return sample_index_; }
  SolveErrorKind kind() const { return kind_; }

 private:
  std::size_t sample_index_;
  SolveErrorKind kind_;
};

/// Quasi-static trace: every sample is a steady-state solve of the actual (faulted) valve
/// word, recorded with the commanded word, spikes and Gaussian noise. Deterministic in seed.
Trace simulate(const SystemConfig& config, const Scenario& scenario,
               const std::vector<FaultSpec>& faults);

/// Randomized duty cycle of alternating extension (PA+BT) and retraction (PB+AT) strokes
/// under a load opposing the motion. Each stroke is split into a few steps whose DFCU codes
/// give every valve a distinct open/closed pattern within the stroke, and every valve is
/// both opened and closed, so single-valve faults are identifiable from one stroke.
struct DutyCycleOptions {
  double duration = 60.0;         // s
  double sample_period = 0.01;
  std::size_t stroke_samples = 100;  // one stroke per default analysis period
  std::size_t step_jitter = 4;    // samples of random variation in step boundaries
  double min_force = 2e3;         // N, magnitude of the opposing load
  double max_force = 8e3;
  double supply_pressure = 10e6;  // Pa
  double min_drop = 1.5e6;        // Pa, minimum healthy pressure drop over the active DFCUs
  std::uint64_t seed = 1;
};

/// Steps per stroke for N valves: the shortest pattern length L with 2^L - 2 >= N.
std::size_t stroke_steps(std::size_t valves_per_dfcu);

Scenario make_duty_cycle(const SystemConfig& config, const DutyCycleOptions& options);

/// Stable hex identifier of a configuration (FNV-1a over its canonical parameters).
std::string config_digest(const SystemConfig& config);

}  // namespace hydrodiag
