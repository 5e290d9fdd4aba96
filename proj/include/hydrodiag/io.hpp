#pragma once

#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "hydrodiag/pipeline.hpp"
#include "hydrodiag/simulator.hpp"

namespace hydrodiag::io {

/// Malformed input file. `line()` is set for line-oriented formats.
class InputError : public std::runtime_error {
 public:
  explicit InputError(const std::string& what, std::optional<std::size_t> line = std::nullopt)
      : std::runtime_error(line ? "line " + std::to_string(*line) + ": " + what : what), line_(line) {}
  std::optional<std::size_t> line() const { return line_; }

 private:
  std::optional<std::size_t> line_;
};

using nlohmann::json;

json read_json_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& text);

// System configuration. Either an explicit "dfcus" object (PA/BT/AT/PB arrays of
// {kv, alpha}) or the generated layout from "valves_per_dfcu" and "kv_base".
SystemConfig config_from_json(const json& j);
json config_to_json(const SystemConfig& config);

// A fault as {"valve": "AT3", "mode": "closed", "onset_sample": 0}.
FaultSpec fault_from_json(const json& j, std::size_t valves_per_dfcu);
json fault_to_json(const FaultSpec& fault, std::size_t valves_per_dfcu);

/// Scenario document: noise/spike/seed settings plus either explicit "steps" or a
/// "duty_cycle" block expanded with make_duty_cycle. Faults, if any, come from "faults".
struct ScenarioFile {
  Scenario scenario;
  std::vector<FaultSpec> faults;
  std::optional<DutyCycleOptions> duty_cycle;  // set when steps were generated
};

/// `seed_override` replaces the scenario seed and, unless the duty_cycle block pins its own
/// seed, the generator seed.
ScenarioFile scenario_from_json(const json& j, const SystemConfig& config,
                                std::optional<std::uint64_t> seed_override = std::nullopt);

/// Unknown keys are rejected; missing keys keep the values of `base`.
DiagnosticsConfig diagnostics_from_json(const json& j, const DiagnosticsConfig& base = {});
json diagnostics_to_json(const DiagnosticsConfig& cfg);

/// Trace CSV: `# config_digest: <hex>` line, header `t,p_s,p_a,p_b,u_PA1,...`, one sample per
/// line with values in %.9g and bits as 0/1.
void write_trace_csv(std::ostream& out, const Trace& trace, std::size_t valves_per_dfcu);
/// Throws InputError with the offending line number. The valve count comes from the header.
Trace read_trace_csv(std::istream& in);

json report_to_json(const FaultReport& report);
FaultReport report_from_json(const json& j);

/// One line per period and valve: `period,valve,x_open,x_closed,filtered_open,filtered_closed`.
void write_series_csv(std::ostream& out, const FaultReport& report);

/// "AT3 jammed-closed confidence=0.93 at period 12"
std::string verdict_line(const Verdict& verdict, std::size_t valves_per_dfcu);

/// Filtered and not-filtered maxima per valve, rows with a verdict marked with '*',
/// followed by the verdict lines (or "no faults identified").
std::string render_table(const FaultReport& report);

}  // namespace hydrodiag::io
