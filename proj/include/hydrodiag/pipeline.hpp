#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "hydrodiag/estimator.hpp"
#include "hydrodiag/model.hpp"
#include "hydrodiag/simulator.hpp"

namespace hydrodiag {

struct DiagnosticsConfig {
  std::size_t period_len = 100;       // samples per analysis period
  double lambda = 0.10;               // EWMA weight of the newest period
  double activity_threshold = 0.10;   // minimum fraction of samples carrying evidence
  bool spike_rejection = true;
  double spike_threshold = 0.3e6;     // Pa per sample
  std::size_t spike_window = 8;       // samples dropped on each side of a jump
  bool reject_switching = true;       // also treat every change of the command word as a jump
  double verdict_threshold = 0.5;
  std::size_t verdict_periods = 3;    // consecutive gated periods at or above the threshold
  double min_retained_fraction = 0.25;
  double evidence_dp = 1e3;           // Pa; smaller pressure drops carry no evidence
  double noise_floor = 50e3;          // Pa; samples with a smaller drop over an open DFCU are not used
  double tau = 0.5;
  PenaltyConfig penalty;

  void validate() const;
};

/// Which of a valve's two fault variables: x_open (evidence while commanded open) or
/// x_closed (evidence while commanded closed).
enum class VariableKind { Open, Closed };

/// keep[i] is false for samples within spike_window of a jump larger than spike_threshold
/// in any of p_s, p_a, p_b. A jump at i is the difference between samples i-1 and i.
/// With reject_switching, a command change at i counts as a jump too: a switching transient
/// can be hidden when it opposes the new steady-state level.
std::vector<bool> spike_mask(std::span<const Sample> samples, const DiagnosticsConfig& cfg);
std::vector<Sample> reject_spikes(std::span<const Sample> samples, const DiagnosticsConfig& cfg);

/// Fraction of samples where the valve is commanded in the given state and the pressure
/// drop across its DFCU is at least `evidence_dp`.
double activity_fraction(const SystemConfig& config, std::span<const Sample> samples, std::size_t valve_index,
                         VariableKind kind, double evidence_dp);

/// False when a DFCU with a commanded-open valve sees |dp| below `noise_floor`. Near zero
/// drop the orifice kernel turns sensor noise into large relative flow errors, and since the
/// residual is the sum of the open-valve columns, the solver would fit that noise with
/// spurious jammed-closed estimates.
bool flow_resolvable(const SystemConfig& config, const Sample& sample, double noise_floor);

/// Retained samples that pass flow_resolvable; these are the rows of the sensing system.
std::vector<Sample> resolvable_samples(const SystemConfig& config, std::span<const Sample> samples,
                                       double noise_floor);

inline double ewma_update(double previous, double estimate, double lambda) {
  return lambda * estimate + (1.0 - lambda) * previous;
}

/// EWMA state of all 8N fault variables, in sensing-column order.
struct FilterState {
  std::vector<double> value;
  std::vector<std::size_t> gated_in;    // periods that updated each variable
  std::vector<std::size_t> streak;      // consecutive gated periods at/above threshold
  std::vector<std::optional<std::size_t>> verdict_period;
  std::size_t periods_seen = 0;

  explicit FilterState(std::size_t valves = 0)
      : value(2 * valves, 0.0), gated_in(2 * valves, 0), streak(2 * valves, 0), verdict_period(2 * valves) {}

  FaultVariables snapshot() const { return FaultVariables::from_columns(value); }
};

enum class PeriodStatus { Solved, Skipped, Uninformative };
std::string_view period_status_name(PeriodStatus status);

/// Outcome of estimating one period, before it is folded into the filter.
struct PeriodSolution {
  PeriodStatus status = PeriodStatus::Uninformative;
  FaultVariables estimates;
  std::vector<double> activity;  // per sensing column
  std::string note;
};

/// Builds the sensing system for already spike-filtered samples and solves it.
PeriodSolution solve_period(const SystemConfig& config, std::span<const Sample> retained,
                            std::size_t period_len, const DiagnosticsConfig& cfg);

/// Applies gating, the EWMA and verdict bookkeeping for one solved period.
/// Returns per-column gating decisions.
std::vector<bool> apply_period(const PeriodSolution& solution, std::size_t period_index,
                               const DiagnosticsConfig& cfg, FilterState& state);

/// solve_period followed by apply_period; `samples` are the period's retained samples.
PeriodSolution diagnose_period(const SystemConfig& config, std::span<const Sample> samples,
                               const DiagnosticsConfig& cfg, FilterState& state);

struct PeriodInput {
  std::size_t index = 0;
  std::size_t start_sample = 0;
  std::vector<Sample> retained;
};

/// Fixed, non-overlapping windows of period_len samples; a trailing partial window is dropped.
/// Spike rejection runs over the whole trace so jumps on window boundaries are caught.
std::vector<PeriodInput> segment_trace(const Trace& trace, const DiagnosticsConfig& cfg);

/// Reference implementation: one period after another.
std::vector<PeriodSolution> solve_periods_serial(const SystemConfig& config, std::span<const PeriodInput> periods,
                                                 const DiagnosticsConfig& cfg);
/// OpenMP over periods; results are identical to the serial path.
std::vector<PeriodSolution> solve_periods_parallel(const SystemConfig& config,
                                                   std::span<const PeriodInput> periods,
                                                   const DiagnosticsConfig& cfg);

struct PeriodRecord {
  std::size_t index = 0;
  std::size_t start_sample = 0;
  std::size_t retained = 0;
  PeriodStatus status = PeriodStatus::Uninformative;
  FaultVariables estimates;
  std::vector<bool> gated;
  FaultVariables filtered;
  std::string note;
};

struct Verdict {
  std::size_t valve_index = 0;
  FaultMode mode = FaultMode::JammedClosed;
  double confidence = 0.0;
  std::size_t period = 0;
};

/// Largest values per valve over the run: the EWMA output and its raw per-period input.
struct ValveTable {
  FaultVariables filtered_max;
  FaultVariables unfiltered_max;
};

struct FaultReport {
  std::size_t valves_per_dfcu = 0;
  std::vector<PeriodRecord> periods;
  FaultVariables filtered;
  ValveTable table;
  std::vector<Verdict> verdicts;
};

enum class Execution { Serial, Parallel };

FaultReport run_diagnostics(const SystemConfig& config, const Trace& trace, const DiagnosticsConfig& cfg,
                            Execution execution = Execution::Parallel);

}  // namespace hydrodiag
