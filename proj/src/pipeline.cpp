#include "hydrodiag/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <exception>

namespace hydrodiag {

void DiagnosticsConfig::validate() const {
  if (period_len < 1) throw std::invalid_argument("period_len must be >= 1");
  if (!(lambda > 0.0 && lambda <= 1.0)) throw std::invalid_argument("lambda must be in (0, 1]");
  if (!(activity_threshold >= 0.0 && activity_threshold <= 1.0)) {
    throw std::invalid_argument("activity_threshold must be in [0, 1]");
  }
  if (!(spike_threshold > 0.0)) throw std::invalid_argument("spike_threshold must be > 0");
  if (!(verdict_threshold > 0.0 && verdict_threshold <= 1.0)) {
    throw std::invalid_argument("verdict_threshold must be in (0, 1]");
  }
  if (verdict_periods < 1) throw std::invalid_argument("verdict_periods must be >= 1");
  if (!(min_retained_fraction >= 0.0 && min_retained_fraction <= 1.0)) {
    throw std::invalid_argument("min_retained_fraction must be in [0, 1]");
  }
  if (!(evidence_dp >= 0.0)) throw std::invalid_argument("evidence_dp must be >= 0");
  if (!(noise_floor >= 0.0)) throw std::invalid_argument("noise_floor must be >= 0");
  if (!(tau > 0.0 && tau < 1.0)) throw std::invalid_argument("tau must be in (0, 1)");
}

std::string_view period_status_name(PeriodStatus status) {
  switch (status) {
    case PeriodStatus::Solved: return "solved";
    case PeriodStatus::Skipped: return "skipped";
    case PeriodStatus::Uninformative: return "uninformative";
  }
  return "?";
}

std::vector<bool> spike_mask(std::span<const Sample> samples, const DiagnosticsConfig& cfg) {
  const std::size_t n = samples.size();
  std::vector<bool> keep(n, true);
  const auto w = static_cast<std::ptrdiff_t>(cfg.spike_window);
  for (std::size_t i = 1; i < n; ++i) {
    const auto& a = samples[i - 1].pressure;
    const auto& b = samples[i].pressure;
    const double jump = std::max({std::abs(b.p_s - a.p_s), std::abs(b.p_a - a.p_a), std::abs(b.p_b - a.p_b)});
    const bool switched = cfg.reject_switching && !(samples[i].commanded == samples[i - 1].commanded);
    if (!(jump > cfg.spike_threshold) && !switched) continue;
    const auto lo = std::max<std::ptrdiff_t>(0, static_cast<std::ptrdiff_t>(i) - w);
    const auto hi = std::min<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(n) - 1, static_cast<std::ptrdiff_t>(i) + w);
    for (auto j = lo; j <= hi; ++j) keep[j] = false;
  }
  return keep;
}

std::vector<Sample> reject_spikes(std::span<const Sample> samples, const DiagnosticsConfig& cfg) {
  const auto keep = spike_mask(samples, cfg);
  std::vector<Sample> out;
  out.reserve(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (keep[i]) out.push_back(samples[i]);
  }
  return out;
}

double activity_fraction(const SystemConfig& config, std::span<const Sample> samples, std::size_t valve_index,
                         VariableKind kind, double evidence_dp) {
  if (samples.empty()) return 0.0;
  const Dfcu d = config.dfcu_of(valve_index);
  const bool want_open = kind == VariableKind::Open;
  std::size_t hits = 0;
  for (const auto& s : samples) {
    if (s.commanded[valve_index] != want_open) continue;
    const double dp = dfcu_pressure_drop(d, s.pressure, config.tank_pressure);
    if (std::abs(dp) >= evidence_dp && dp != 0.0) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(samples.size());
}

bool flow_resolvable(const SystemConfig& config, const Sample& sample, double noise_floor) {
  for (Dfcu d : kDfcuOrder) {
    if (sample.commanded.dfcu_code(d) == 0) continue;
    if (std::abs(dfcu_pressure_drop(d, sample.pressure, config.tank_pressure)) < noise_floor) return false;
  }
  return true;
}

std::vector<Sample> resolvable_samples(const SystemConfig& config, std::span<const Sample> samples,
                                       double noise_floor) {
  std::vector<Sample> out;
  out.reserve(samples.size());
  for (const auto& s : samples) {
    if (flow_resolvable(config, s, noise_floor)) out.push_back(s);
  }
  return out;
}

PeriodSolution solve_period(const SystemConfig& config, std::span<const Sample> retained,
                            std::size_t period_len, const DiagnosticsConfig& cfg) {
  const std::size_t valves = config.valve_count();
  PeriodSolution sol;
  sol.estimates = FaultVariables(valves);
  sol.activity.assign(2 * valves, 0.0);

  const double needed = cfg.min_retained_fraction * static_cast<double>(period_len);
  if (retained.empty() || static_cast<double>(retained.size()) < needed) {
    sol.status = PeriodStatus::Uninformative;
    sol.note = "only " + std::to_string(retained.size()) + " samples retained";
    return sol;
  }
  const auto rows = resolvable_samples(config, retained, cfg.noise_floor);
  if (rows.empty()) {
    sol.status = PeriodStatus::Uninformative;
    sol.note = "no sample above the noise floor";
    return sol;
  }
  // Evidence is counted on the rows actually used, as a fraction of all retained samples.
  const double used = static_cast<double>(rows.size()) / static_cast<double>(retained.size());
  for (std::size_t v = 0; v < valves; ++v) {
    sol.activity[v] = used * activity_fraction(config, rows, v, VariableKind::Open, cfg.evidence_dp);
    sol.activity[valves + v] = used * activity_fraction(config, rows, v, VariableKind::Closed, cfg.evidence_dp);
  }

  const SensingSystem system = build_system(config, rows, cfg.penalty);
  if (system.uninformative) {
    sol.status = PeriodStatus::Uninformative;
    sol.note = "no flow information";
    return sol;
  }
  try {
    const FaultEstimate est = estimate_faults(system, cfg.tau);
    sol.estimates = est.variables;
    sol.status = PeriodStatus::Solved;
  } catch (const NumericalFailure& e) {
    sol.status = PeriodStatus::Skipped;
    sol.note = e.what();
  }
  return sol;
}

std::vector<bool> apply_period(const PeriodSolution& solution, std::size_t period_index,
                               const DiagnosticsConfig& cfg, FilterState& state) {
  const std::size_t cols = state.value.size();
  std::vector<bool> gated(cols, false);
  ++state.periods_seen;
  if (solution.status != PeriodStatus::Solved) return gated;

  for (std::size_t c = 0; c < cols; ++c) {
    if (solution.activity[c] < cfg.activity_threshold) continue;
    gated[c] = true;
    ++state.gated_in[c];
    state.value[c] = ewma_update(state.value[c], solution.estimates[c], cfg.lambda);
    if (state.value[c] >= cfg.verdict_threshold) {
      if (++state.streak[c] == cfg.verdict_periods) state.verdict_period[c] = period_index;
    } else {
      state.streak[c] = 0;
      state.verdict_period[c].reset();
    }
  }
  return gated;
}

PeriodSolution diagnose_period(const SystemConfig& config, std::span<const Sample> samples,
                               const DiagnosticsConfig& cfg, FilterState& state) {
  PeriodSolution sol = solve_period(config, samples, cfg.period_len, cfg);
  apply_period(sol, state.periods_seen, cfg, state);
  return sol;
}

std::vector<PeriodInput> segment_trace(const Trace& trace, const DiagnosticsConfig& cfg) {
  const std::size_t total = trace.samples.size();
  const std::size_t count = total / cfg.period_len;
  std::vector<bool> keep(total, true);
  if (cfg.spike_rejection) keep = spike_mask(trace.samples, cfg);

  std::vector<PeriodInput> periods(count);
  for (std::size_t p = 0; p < count; ++p) {
    periods[p].index = p;
    periods[p].start_sample = p * cfg.period_len;
    for (std::size_t i = periods[p].start_sample; i < periods[p].start_sample + cfg.period_len; ++i) {
      if (keep[i]) periods[p].retained.push_back(trace.samples[i]);
    }
  }
  return periods;
}

std::vector<PeriodSolution> solve_periods_serial(const SystemConfig& config, std::span<const PeriodInput> periods,
                                                 const DiagnosticsConfig& cfg) {
  std::vector<PeriodSolution> out;
  out.reserve(periods.size());
  for (const auto& p : periods) out.push_back(solve_period(config, p.retained, cfg.period_len, cfg));
  return out;
}

std::vector<PeriodSolution> solve_periods_parallel(const SystemConfig& config,
                                                   std::span<const PeriodInput> periods,
                                                   const DiagnosticsConfig& cfg) {
  const auto count = static_cast<std::ptrdiff_t>(periods.size());
  std::vector<PeriodSolution> out(periods.size());
  std::exception_ptr failure;
#pragma omp parallel for schedule(dynamic, 1)
  for (std::ptrdiff_t p = 0; p < count; ++p) {
    try {
      out[p] = solve_period(config, periods[p].retained, cfg.period_len, cfg);
    } catch (...) {
#pragma omp critical(hydrodiag_period_failure)
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);
  return out;
}

FaultReport run_diagnostics(const SystemConfig& config, const Trace& trace, const DiagnosticsConfig& cfg,
                            Execution execution) {
  config.validate();
  cfg.validate();
  for (const auto& s : trace.samples) {
    if (s.commanded.size() != config.valve_count()) {
      throw std::invalid_argument("trace valve words do not match the configuration");
    }
  }
  const std::size_t valves = config.valve_count();
  const auto periods = segment_trace(trace, cfg);
  const auto solutions = execution == Execution::Serial ? solve_periods_serial(config, periods, cfg)
                                                        : solve_periods_parallel(config, periods, cfg);

  FaultReport report;
  report.valves_per_dfcu = config.valves_per_dfcu();
  report.table.filtered_max = FaultVariables(valves);
  report.table.unfiltered_max = FaultVariables(valves);

  FilterState state(valves);
  std::vector<double> filtered_max(2 * valves, 0.0), unfiltered_max(2 * valves, 0.0);
  for (std::size_t p = 0; p < periods.size(); ++p) {
    const auto& sol = solutions[p];
    PeriodRecord rec;
    rec.index = periods[p].index;
    rec.start_sample = periods[p].start_sample;
    rec.retained = periods[p].retained.size();
    rec.status = sol.status;
    rec.estimates = sol.estimates;
    rec.note = sol.note;
    rec.gated = apply_period(sol, rec.index, cfg, state);
    rec.filtered = state.snapshot();
    for (std::size_t c = 0; c < 2 * valves; ++c) {
      filtered_max[c] = std::max(filtered_max[c], state.value[c]);
      if (sol.status == PeriodStatus::Solved) unfiltered_max[c] = std::max(unfiltered_max[c], sol.estimates[c]);
    }
    report.periods.push_back(std::move(rec));
  }
  report.filtered = state.snapshot();
  report.table.filtered_max = FaultVariables::from_columns(filtered_max);
  report.table.unfiltered_max = FaultVariables::from_columns(unfiltered_max);

  for (std::size_t c = 0; c < 2 * valves; ++c) {
    if (state.streak[c] < cfg.verdict_periods || !state.verdict_period[c]) continue;
    Verdict v;
    v.valve_index = c % valves;
    v.mode = c < valves ? FaultMode::JammedClosed : FaultMode::JammedOpen;
    v.confidence = state.value[c];
    v.period = *state.verdict_period[c];
    report.verdicts.push_back(v);
  }
  std::sort(report.verdicts.begin(), report.verdicts.end(),
            [](const Verdict& a, const Verdict& b) { return a.confidence > b.confidence; });
  return report;
}

}  // namespace hydrodiag
