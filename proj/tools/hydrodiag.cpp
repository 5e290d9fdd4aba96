// hydrodiag: simulate valve-fault traces, diagnose them, and print report tables.
//
//   hydrodiag simulate --config sys.json --scenario duty.json --fault AT3:closed --seed 7 --out t.csv
//   hydrodiag diagnose --config sys.json --trace t.csv --report r.json [--series s.csv]
//   hydrodiag report --report r.json
//
// Exit codes: 0 completed (with or without faults), 1 input or usage error, 2 numerical failure.

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "hydrodiag/io.hpp"
#include "hydrodiag/pipeline.hpp"

namespace {

using namespace hydrodiag;

constexpr int kExitOk = 0;
constexpr int kExitInput = 1;
constexpr int kExitNumerical = 2;

struct SimulateArgs {
  std::string config_path;
  std::string scenario_path;
  std::vector<std::string> faults;
  std::optional<std::uint64_t> seed;
  std::optional<double> noise_sigma;
  std::optional<double> spike_magnitude;
  std::string out_path;
};

// Flags left unset keep the value from --diag (or the built-in default).
struct DiagnoseArgs {
  std::string config_path;
  std::string trace_path;
  std::string diag_path;
  std::string report_path;
  std::string series_path;
  bool serial = false;
  std::optional<std::size_t> period_len;
  std::optional<double> lambda;
  std::optional<double> activity_threshold;
  std::optional<double> spike_threshold;
  std::optional<std::size_t> spike_window;
  bool no_spike_rejection = false;
  bool no_reject_switching = false;
  std::optional<double> verdict_threshold;
  std::optional<std::size_t> verdict_periods;
  std::optional<double> min_retained_fraction;
  std::optional<double> evidence_dp;
  std::optional<double> noise_floor;
  std::optional<double> tau;
  std::optional<double> open_gain;
  std::optional<double> closed_penalty;
};

int run_simulate(const SimulateArgs& a) {
  const SystemConfig config = io::config_from_json(io::read_json_file(a.config_path));
  io::ScenarioFile file = io::scenario_from_json(io::read_json_file(a.scenario_path), config, a.seed);
  if (a.noise_sigma) file.scenario.noise_sigma = *a.noise_sigma;
  if (a.spike_magnitude) file.scenario.spike_magnitude = *a.spike_magnitude;
  if (!a.faults.empty()) {
    file.faults.clear();
    for (const auto& f : a.faults) {
      try {
        file.faults.push_back(parse_fault(f, config.valves_per_dfcu()));
      } catch (const std::invalid_argument& e) {
        throw io::InputError(std::string("--fault: ") + e.what());
      }
    }
  }
  try {
    file.scenario.validate(config);
  } catch (const std::invalid_argument& e) {
    throw io::InputError(std::string("scenario: ") + e.what());
  }

  Trace trace;
  try {
    trace = simulate(config, file.scenario, file.faults);
  } catch (const SimulationError& e) {
    std::fprintf(stderr, "hydrodiag: simulation failed at %s\n", e.what());
    return kExitInput;
  } catch (const ConflictingFaults& e) {
    throw io::InputError(e.what());
  } catch (const std::out_of_range& e) {
    throw io::InputError(e.what());
  }

  std::ostringstream csv;
  io::write_trace_csv(csv, trace, config.valves_per_dfcu());
  io::write_text_file(a.out_path, csv.str());

  std::printf("samples: %zu (%.2f s at %.3g s)\n", trace.samples.size(),
              static_cast<double>(trace.samples.size()) * file.scenario.sample_period, file.scenario.sample_period);
  std::printf("steps: %zu%s\n", file.scenario.steps.size(), file.duty_cycle ? " (generated duty cycle)" : "");
  std::printf("seed: %llu\n", static_cast<unsigned long long>(file.scenario.seed));
  if (file.faults.empty()) {
    std::printf("faults injected: none\n");
  } else {
    for (const auto& f : file.faults) {
      std::printf("fault injected: %s jammed-%s from sample %zu\n",
                  valve_name(f.valve_index, config.valves_per_dfcu()).c_str(),
                  std::string(fault_mode_name(f.mode)).c_str(), f.onset_sample);
    }
  }
  std::printf("config digest: %s\nwrote %s\n", trace.config_digest.c_str(), a.out_path.c_str());
  return kExitOk;
}

DiagnosticsConfig diagnostics_config(const DiagnoseArgs& a) {
  DiagnosticsConfig cfg;
  if (!a.diag_path.empty()) cfg = io::diagnostics_from_json(io::read_json_file(a.diag_path));
  if (a.period_len) cfg.period_len = *a.period_len;
  if (a.lambda) cfg.lambda = *a.lambda;
  if (a.activity_threshold) cfg.activity_threshold = *a.activity_threshold;
  if (a.spike_threshold) cfg.spike_threshold = *a.spike_threshold;
  if (a.spike_window) cfg.spike_window = *a.spike_window;
  if (a.no_spike_rejection) cfg.spike_rejection = false;
  if (a.no_reject_switching) cfg.reject_switching = false;
  if (a.verdict_threshold) cfg.verdict_threshold = *a.verdict_threshold;
  if (a.verdict_periods) cfg.verdict_periods = *a.verdict_periods;
  if (a.min_retained_fraction) cfg.min_retained_fraction = *a.min_retained_fraction;
  if (a.evidence_dp) cfg.evidence_dp = *a.evidence_dp;
  if (a.noise_floor) cfg.noise_floor = *a.noise_floor;
  if (a.tau) cfg.tau = *a.tau;
  if (a.open_gain) cfg.penalty.open_gain = *a.open_gain;
  if (a.closed_penalty) cfg.penalty.closed_penalty = *a.closed_penalty;
  try {
    cfg.validate();
  } catch (const std::invalid_argument& e) {
    throw io::InputError(std::string("diagnostics: ") + e.what());
  }
  return cfg;
}

int run_diagnose(const DiagnoseArgs& a) {
  const SystemConfig config = io::config_from_json(io::read_json_file(a.config_path));
  const DiagnosticsConfig cfg = diagnostics_config(a);

  std::ifstream in(a.trace_path);
  if (!in) throw io::InputError("cannot open " + a.trace_path);
  Trace trace;
  try {
    trace = io::read_trace_csv(in);
  } catch (const io::InputError& e) {
    throw io::InputError(a.trace_path + ": " + e.what());
  }
  if (trace.samples.front().commanded.size() != config.valve_count()) {
    throw io::InputError("trace has " + std::to_string(trace.samples.front().commanded.size()) +
                         " valve columns, config has " + std::to_string(config.valve_count()));
  }
  const std::string digest = config_digest(config);
  if (!trace.config_digest.empty() && trace.config_digest != digest) {
    std::fprintf(stderr, "warning: trace was recorded with config %s, diagnosing with %s\n",
                 trace.config_digest.c_str(), digest.c_str());
  }

  const FaultReport report =
      run_diagnostics(config, trace, cfg, a.serial ? Execution::Serial : Execution::Parallel);

  io::write_text_file(a.report_path, io::report_to_json(report).dump(2) + "\n");
  if (!a.series_path.empty()) {
    std::ostringstream csv;
    io::write_series_csv(csv, report);
    io::write_text_file(a.series_path, csv.str());
  }
  std::fputs(io::render_table(report).c_str(), stdout);
  return kExitOk;
}

int run_report(const std::string& path) {
  const FaultReport report = io::report_from_json(io::read_json_file(path));
  std::fputs(io::render_table(report).c_str(), stdout);
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Valve fault identification for a four-DFCU digital hydraulic actuator"};
  app.require_subcommand(1);

  SimulateArgs sim;
  auto* simulate_cmd = app.add_subcommand("simulate", "Generate a pressure trace from a scenario");
  simulate_cmd->add_option("--config", sim.config_path, "System configuration JSON")->required();
  simulate_cmd->add_option("--scenario", sim.scenario_path, "Scenario JSON (steps or duty_cycle)")->required();
  simulate_cmd->add_option("--fault", sim.faults, "Injected fault, e.g. AT3:closed, PB3:open@250; replaces the scenario's faults");
  simulate_cmd->add_option("--seed", sim.seed, "Noise seed; also the duty-cycle seed unless the scenario pins one");
  simulate_cmd->add_option("--noise-sigma", sim.noise_sigma, "Pressure noise standard deviation (Pa)");
  simulate_cmd->add_option("--spike-magnitude", sim.spike_magnitude, "Initial spike height at command changes (Pa)");
  simulate_cmd->add_option("--out", sim.out_path, "Trace CSV to write")->required();

  DiagnoseArgs diag;
  auto* diagnose_cmd = app.add_subcommand("diagnose", "Identify jammed valves in a trace");
  diagnose_cmd->add_option("--config", diag.config_path, "System configuration JSON")->required();
  diagnose_cmd->add_option("--trace", diag.trace_path, "Trace CSV")->required();
  diagnose_cmd->add_option("--diag", diag.diag_path, "Diagnostics configuration JSON");
  diagnose_cmd->add_option("--report", diag.report_path, "Report JSON to write")->required();
  diagnose_cmd->add_option("--series", diag.series_path, "Per-period CSV series to write");
  diagnose_cmd->add_flag("--serial", diag.serial, "Solve periods one after another instead of in parallel");
  diagnose_cmd->add_option("--period-len", diag.period_len, "Samples per analysis period");
  diagnose_cmd->add_option("--lambda", diag.lambda, "EWMA weight of the newest period");
  diagnose_cmd->add_option("--activity-threshold", diag.activity_threshold, "Minimum evidence fraction for a filter update");
  diagnose_cmd->add_option("--spike-threshold", diag.spike_threshold, "Pressure jump per sample that marks a spike (Pa)");
  diagnose_cmd->add_option("--spike-window", diag.spike_window, "Samples dropped on each side of a spike");
  diagnose_cmd->add_flag("--no-spike-rejection", diag.no_spike_rejection, "Keep every sample");
  diagnose_cmd->add_flag("--no-reject-switching", diag.no_reject_switching, "Do not treat command changes as spikes");
  diagnose_cmd->add_option("--verdict-threshold", diag.verdict_threshold, "Filtered value that declares a fault");
  diagnose_cmd->add_option("--verdict-periods", diag.verdict_periods, "Consecutive gated periods above the threshold");
  diagnose_cmd->add_option("--min-retained-fraction", diag.min_retained_fraction, "Fraction of a period that must survive spike rejection");
  diagnose_cmd->add_option("--evidence-dp", diag.evidence_dp, "Pressure drop below which a sample carries no evidence (Pa)");
  diagnose_cmd->add_option("--noise-floor", diag.noise_floor, "Pressure drop below which a sample is not used (Pa)");
  diagnose_cmd->add_option("--tau", diag.tau, "Quantile of the regression");
  diagnose_cmd->add_option("--open-gain", diag.open_gain, "Multiplier of the x_open penalties");
  diagnose_cmd->add_option("--closed-penalty", diag.closed_penalty, "Penalty of the x_closed variables");

  std::string report_path;
  auto* report_cmd = app.add_subcommand("report", "Print the table of a saved report");
  report_cmd->add_option("--report", report_path, "Report JSON")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitInput;
  }

  try {
    if (*simulate_cmd) return run_simulate(sim);
    if (*diagnose_cmd) return run_diagnose(diag);
    return run_report(report_path);
  } catch (const io::InputError& e) {
    std::fprintf(stderr, "hydrodiag: %s\n", e.what());
    return kExitInput;
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "hydrodiag: %s\n", e.what());
    return kExitInput;
  } catch (const NumericalFailure& e) {
    std::fprintf(stderr, "hydrodiag: numerical failure: %s\n", e.what());
    return kExitNumerical;
  } catch (const SolveError& e) {
    std::fprintf(stderr, "hydrodiag: numerical failure: %s\n", e.what());
    return kExitNumerical;
  }
}
