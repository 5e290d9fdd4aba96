#include "hydrodiag/io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>

namespace hydrodiag::io {

namespace {

// Rejects keys outside `allowed`, so misspelled settings fail loudly instead of being ignored.
void check_keys(const json& j, std::initializer_list<std::string_view> allowed, std::string_view what) {
  if (!j.is_object()) throw InputError(std::string(what) + " must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
      throw InputError(std::string(what) + ": unknown key '" + key + "'");
    }
  }
}

template <typename T>
T get_or(const json& j, const char* key, T fallback, std::string_view what) {
  const auto it = j.find(key);
  if (it == j.end()) return fallback;
  try {
    return it->get<T>();
  } catch (const json::exception&) {
    throw InputError(std::string(what) + ": key '" + key + "' has the wrong type");
  }
}

std::string fmt9(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

json series(const std::vector<double>& v) { return json(v); }

std::vector<double> doubles(const json& j, const char* key, std::size_t n, std::string_view what) {
  const auto it = j.find(key);
  if (it == j.end()) throw InputError(std::string(what) + ": missing '" + key + "'");
  std::vector<double> v;
  try {
    v = it->get<std::vector<double>>();
  } catch (const json::exception&) {
    throw InputError(std::string(what) + ": '" + key + "' must be an array of numbers");
  }
  if (v.size() != n) throw InputError(std::string(what) + ": '" + key + "' must have " + std::to_string(n) + " entries");
  return v;
}

json variables_to_json(const FaultVariables& v) { return {{"open", series(v.x_open)}, {"closed", series(v.x_closed)}}; }

FaultVariables variables_from_json(const json& j, std::size_t valves, std::string_view what) {
  FaultVariables v(valves);
  v.x_open = doubles(j, "open", valves, what);
  v.x_closed = doubles(j, "closed", valves, what);
  return v;
}

PeriodStatus parse_status(const std::string& s) {
  if (s == "solved") return PeriodStatus::Solved;
  if (s == "skipped") return PeriodStatus::Skipped;
  if (s == "uninformative") return PeriodStatus::Uninformative;
  throw InputError("unknown period status '" + s + "'");
}

FaultMode parse_mode(const std::string& s) {
  if (s == "closed") return FaultMode::JammedClosed;
  if (s == "open") return FaultMode::JammedOpen;
  throw InputError("fault mode must be 'open' or 'closed', got '" + s + "'");
}

}  // namespace

json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open " + path);
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw InputError(path + ": " + e.what());
  }
}

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write " + path);
  out << text;
  if (!out) throw InputError("write failed: " + path);
}

SystemConfig config_from_json(const json& j) {
  check_keys(j, {"valves_per_dfcu", "kv_base", "alpha", "dfcus", "area_a", "area_b", "tank_pressure", "dp_laminar"},
             "config");
  SystemConfig c;
  if (j.contains("dfcus")) {
    if (j.contains("valves_per_dfcu") || j.contains("kv_base") || j.contains("alpha")) {
      throw InputError("config: give either 'dfcus' or 'valves_per_dfcu'/'kv_base'/'alpha', not both");
    }
    const json& d = j.at("dfcus");
    check_keys(d, {"PA", "BT", "AT", "PB"}, "config.dfcus");
    for (Dfcu unit : kDfcuOrder) {
      const std::string name(dfcu_name(unit));
      if (!d.contains(name)) throw InputError("config.dfcus: missing '" + name + "'");
      const json& list = d.at(name);
      if (!list.is_array()) throw InputError("config.dfcus." + name + " must be an array");
      auto& valves = c.dfcus[static_cast<int>(unit)];
      valves.clear();
      for (const auto& v : list) {
        check_keys(v, {"kv", "alpha"}, "config.dfcus." + name);
        ValveParams p;
        p.kv = get_or(v, "kv", p.kv, "valve");
        p.alpha = get_or(v, "alpha", p.alpha, "valve");
        valves.push_back(p);
      }
    }
  } else {
    const auto n = get_or<std::size_t>(j, "valves_per_dfcu", 5, "config");
    c = SystemConfig::make_default(n, get_or(j, "kv_base", 1e-8, "config"));
    const double alpha = get_or(j, "alpha", 0.5, "config");
    for (auto& unit : c.dfcus) {
      for (auto& v : unit) v.alpha = alpha;
    }
  }
  c.area_a = get_or(j, "area_a", c.area_a, "config");
  c.area_b = get_or(j, "area_b", c.area_b, "config");
  c.tank_pressure = get_or(j, "tank_pressure", c.tank_pressure, "config");
  c.dp_laminar = get_or(j, "dp_laminar", c.dp_laminar, "config");
  try {
    c.validate();
  } catch (const std::invalid_argument& e) {
    throw InputError(std::string("config: ") + e.what());
  }
  return c;
}

json config_to_json(const SystemConfig& config) {
  json d = json::object();
  for (Dfcu unit : kDfcuOrder) {
    json list = json::array();
    for (const auto& v : config.dfcus[static_cast<int>(unit)]) list.push_back({{"kv", v.kv}, {"alpha", v.alpha}});
    d[std::string(dfcu_name(unit))] = list;
  }
  return {{"dfcus", d},
          {"area_a", config.area_a},
          {"area_b", config.area_b},
          {"tank_pressure", config.tank_pressure},
          {"dp_laminar", config.dp_laminar}};
}

FaultSpec fault_from_json(const json& j, std::size_t valves_per_dfcu) {
  if (j.is_string()) {
    try {
      return parse_fault(j.get<std::string>(), valves_per_dfcu);
    } catch (const std::invalid_argument& e) {
      throw InputError(std::string("fault: ") + e.what());
    }
  }
  check_keys(j, {"valve", "mode", "onset_sample"}, "fault");
  if (!j.contains("valve") || !j.contains("mode")) throw InputError("fault: 'valve' and 'mode' are required");
  FaultSpec f;
  try {
    f.valve_index = parse_valve_name(j.at("valve").get<std::string>(), valves_per_dfcu);
    f.mode = parse_mode(j.at("mode").get<std::string>());
  } catch (const json::exception&) {
    throw InputError("fault: 'valve' and 'mode' must be strings");
  } catch (const std::invalid_argument& e) {
    throw InputError(std::string("fault: ") + e.what());
  }
  f.onset_sample = get_or<std::size_t>(j, "onset_sample", 0, "fault");
  return f;
}

json fault_to_json(const FaultSpec& fault, std::size_t valves_per_dfcu) {
  return {{"valve", valve_name(fault.valve_index, valves_per_dfcu)},
          {"mode", std::string(fault_mode_name(fault.mode))},
          {"onset_sample", fault.onset_sample}};
}

ScenarioFile scenario_from_json(const json& j, const SystemConfig& config, std::optional<std::uint64_t> seed_override) {
  check_keys(j,
             {"sample_period", "supply_pressure", "noise_sigma", "spike_magnitude", "spike_decay", "seed", "steps",
              "duty_cycle", "faults"},
             "scenario");
  if (j.contains("steps") == j.contains("duty_cycle")) {
    throw InputError("scenario: exactly one of 'steps' and 'duty_cycle' is required");
  }
  ScenarioFile out;
  Scenario& s = out.scenario;
  s.sample_period = get_or(j, "sample_period", s.sample_period, "scenario");
  s.supply_pressure = get_or(j, "supply_pressure", s.supply_pressure, "scenario");
  s.noise_sigma = get_or(j, "noise_sigma", s.noise_sigma, "scenario");
  s.spike_magnitude = get_or(j, "spike_magnitude", s.spike_magnitude, "scenario");
  s.spike_decay = get_or(j, "spike_decay", s.spike_decay, "scenario");
  s.seed = seed_override.value_or(get_or<std::uint64_t>(j, "seed", s.seed, "scenario"));

  if (j.contains("steps")) {
    const json& steps = j.at("steps");
    if (!steps.is_array() || steps.empty()) throw InputError("scenario: 'steps' must be a nonempty array");
    for (std::size_t i = 0; i < steps.size(); ++i) {
      const std::string what = "scenario.steps[" + std::to_string(i) + "]";
      check_keys(steps[i], {"duration", "valves", "force"}, what);
      ScenarioStep step;
      step.duration = get_or<std::size_t>(steps[i], "duration", 0, what);
      try {
        step.valves = ValveWord::parse(get_or<std::string>(steps[i], "valves", "", what));
      } catch (const std::invalid_argument& e) {
        throw InputError(what + ": " + e.what());
      }
      step.force = get_or(steps[i], "force", 0.0, what);
      s.steps.push_back(step);
    }
  } else {
    const json& d = j.at("duty_cycle");
    check_keys(d,
               {"duration", "stroke_samples", "step_jitter", "min_force", "max_force", "min_drop", "seed"},
               "scenario.duty_cycle");
    DutyCycleOptions o;
    o.sample_period = s.sample_period;
    o.supply_pressure = s.supply_pressure;
    o.duration = get_or(d, "duration", o.duration, "duty_cycle");
    o.stroke_samples = get_or(d, "stroke_samples", o.stroke_samples, "duty_cycle");
    o.step_jitter = get_or(d, "step_jitter", o.step_jitter, "duty_cycle");
    o.min_force = get_or(d, "min_force", o.min_force, "duty_cycle");
    o.max_force = get_or(d, "max_force", o.max_force, "duty_cycle");
    o.min_drop = get_or(d, "min_drop", o.min_drop, "duty_cycle");
    o.seed = d.contains("seed") ? get_or<std::uint64_t>(d, "seed", 1, "duty_cycle") : s.seed;
    try {
      const Scenario generated = make_duty_cycle(config, o);
      s.steps = generated.steps;
    } catch (const std::exception& e) {
      throw InputError(std::string("scenario.duty_cycle: ") + e.what());
    }
    out.duty_cycle = o;
  }

  if (j.contains("faults")) {
    if (!j.at("faults").is_array()) throw InputError("scenario: 'faults' must be an array");
    for (const auto& f : j.at("faults")) out.faults.push_back(fault_from_json(f, config.valves_per_dfcu()));
  }
  try {
    s.validate(config);
  } catch (const std::invalid_argument& e) {
    throw InputError(std::string("scenario: ") + e.what());
  }
  return out;
}

DiagnosticsConfig diagnostics_from_json(const json& j, const DiagnosticsConfig& base) {
  check_keys(j,
             {"period_len", "lambda", "activity_threshold", "spike_rejection", "spike_threshold", "spike_window",
              "reject_switching", "verdict_threshold", "verdict_periods", "min_retained_fraction", "evidence_dp",
              "noise_floor", "tau", "penalty"},
             "diagnostics");
  DiagnosticsConfig c = base;
  const char* w = "diagnostics";
  c.period_len = get_or(j, "period_len", c.period_len, w);
  c.lambda = get_or(j, "lambda", c.lambda, w);
  c.activity_threshold = get_or(j, "activity_threshold", c.activity_threshold, w);
  c.spike_rejection = get_or(j, "spike_rejection", c.spike_rejection, w);
  c.spike_threshold = get_or(j, "spike_threshold", c.spike_threshold, w);
  c.spike_window = get_or(j, "spike_window", c.spike_window, w);
  c.reject_switching = get_or(j, "reject_switching", c.reject_switching, w);
  c.verdict_threshold = get_or(j, "verdict_threshold", c.verdict_threshold, w);
  c.verdict_periods = get_or(j, "verdict_periods", c.verdict_periods, w);
  c.min_retained_fraction = get_or(j, "min_retained_fraction", c.min_retained_fraction, w);
  c.evidence_dp = get_or(j, "evidence_dp", c.evidence_dp, w);
  c.noise_floor = get_or(j, "noise_floor", c.noise_floor, w);
  c.tau = get_or(j, "tau", c.tau, w);
  if (j.contains("penalty")) {
    const json& p = j.at("penalty");
    check_keys(p, {"open_gain", "closed_penalty", "degenerate_scale"}, "diagnostics.penalty");
    c.penalty.open_gain = get_or(p, "open_gain", c.penalty.open_gain, w);
    c.penalty.closed_penalty = get_or(p, "closed_penalty", c.penalty.closed_penalty, w);
    c.penalty.degenerate_scale = get_or(p, "degenerate_scale", c.penalty.degenerate_scale, w);
  }
  try {
    c.validate();
  } catch (const std::invalid_argument& e) {
    throw InputError(std::string("diagnostics: ") + e.what());
  }
  return c;
}

json diagnostics_to_json(const DiagnosticsConfig& c) {
  return {{"period_len", c.period_len},
          {"lambda", c.lambda},
          {"activity_threshold", c.activity_threshold},
          {"spike_rejection", c.spike_rejection},
          {"spike_threshold", c.spike_threshold},
          {"spike_window", c.spike_window},
          {"reject_switching", c.reject_switching},
          {"verdict_threshold", c.verdict_threshold},
          {"verdict_periods", c.verdict_periods},
          {"min_retained_fraction", c.min_retained_fraction},
          {"evidence_dp", c.evidence_dp},
          {"noise_floor", c.noise_floor},
          {"tau", c.tau},
          {"penalty",
           {{"open_gain", c.penalty.open_gain},
            {"closed_penalty", c.penalty.closed_penalty},
            {"degenerate_scale", c.penalty.degenerate_scale}}}};
}

void write_trace_csv(std::ostream& out, const Trace& trace, std::size_t valves_per_dfcu) {
  out << "# config_digest: " << trace.config_digest << '\n';
  out << "t,p_s,p_a,p_b";
  for (std::size_t v = 0; v < 4 * valves_per_dfcu; ++v) out << ",u_" << valve_name(v, valves_per_dfcu);
  out << '\n';
  std::string line;
  for (const auto& s : trace.samples) {
    line = fmt9(s.t);
    for (double p : {s.pressure.p_s, s.pressure.p_a, s.pressure.p_b}) {
      line += ',';
      line += fmt9(p);
    }
    for (std::size_t v = 0; v < s.commanded.size(); ++v) {
      line += ',';
      line += s.commanded[v] ? '1' : '0';
    }
    out << line << '\n';
  }
}

Trace read_trace_csv(std::istream& in) {
  Trace trace;
  std::string line;
  std::size_t lineno = 0;
  std::size_t valves = 0;
  bool header = false;
  std::vector<std::string_view> fields;

  const auto split = [&](std::string_view text) {
    fields.clear();
    std::size_t start = 0;
    for (;;) {
      const auto comma = text.find(',', start);
      fields.push_back(text.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start));
      if (comma == std::string_view::npos) break;
      start = comma + 1;
    }
  };
  const auto number = [&](std::string_view f, const char* name) {
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(f.data(), f.data() + f.size(), v);
    if (ec != std::errc() || ptr != f.data() + f.size() || !std::isfinite(v)) {
      throw InputError(std::string("bad ") + name + " value '" + std::string(f) + "'", lineno);
    }
    return v;
  };

  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line[0] == '#') {
      constexpr std::string_view key = "# config_digest:";
      if (line.rfind(key, 0) == 0) {
        std::string digest = line.substr(key.size());
        digest.erase(0, digest.find_first_not_of(' '));
        trace.config_digest = digest;
      }
      continue;
    }
    split(line);
    if (!header) {
      if (fields.size() < 8 || fields[0] != "t" || fields[1] != "p_s" || fields[2] != "p_a" || fields[3] != "p_b" ||
          (fields.size() - 4) % 4 != 0) {
        throw InputError("expected header t,p_s,p_a,p_b,u_PA1,...", lineno);
      }
      valves = fields.size() - 4;
      if (valves / 4 > kMaxValvesPerDfcu) throw InputError("too many valve columns", lineno);
      for (std::size_t v = 0; v < valves; ++v) {
        const std::string want = "u_" + valve_name(v, valves / 4);
        if (fields[4 + v] != want) {
          throw InputError("column " + std::to_string(5 + v) + " should be " + want, lineno);
        }
      }
      header = true;
      continue;
    }
    if (fields.size() != 4 + valves) {
      throw InputError("expected " + std::to_string(4 + valves) + " fields, got " + std::to_string(fields.size()),
                       lineno);
    }
    Sample s;
    s.t = number(fields[0], "t");
    s.pressure.p_s = number(fields[1], "p_s");
    s.pressure.p_a = number(fields[2], "p_a");
    s.pressure.p_b = number(fields[3], "p_b");
    s.commanded = ValveWord(valves);
    for (std::size_t v = 0; v < valves; ++v) {
      const auto f = fields[4 + v];
      if (f != "0" && f != "1") throw InputError("valve bit must be 0 or 1, got '" + std::string(f) + "'", lineno);
      s.commanded.set(v, f == "1");
    }
    if (!trace.samples.empty() && !(s.t > trace.samples.back().t)) {
      throw InputError("time stamps must increase", lineno);
    }
    trace.samples.push_back(s);
  }
  if (!header) throw InputError("no header line");
  if (trace.samples.empty()) throw InputError("no samples");
  if (trace.samples.size() > 1) trace.sample_period = trace.samples[1].t - trace.samples[0].t;
  return trace;
}

json report_to_json(const FaultReport& report) {
  const std::size_t n = report.valves_per_dfcu;
  const std::size_t valves = 4 * n;
  json names = json::array();
  for (std::size_t v = 0; v < valves; ++v) names.push_back(valve_name(v, n));

  json periods = json::array();
  for (const auto& p : report.periods) {
    json gated = json::array();
    for (bool g : p.gated) gated.push_back(g);
    json rec = {{"index", p.index},
                {"start_sample", p.start_sample},
                {"retained", p.retained},
                {"status", std::string(period_status_name(p.status))},
                {"estimates_open", series(p.estimates.x_open)},
                {"estimates_closed", series(p.estimates.x_closed)},
                {"gated", gated},
                {"filtered_open", series(p.filtered.x_open)},
                {"filtered_closed", series(p.filtered.x_closed)}};
    if (!p.note.empty()) rec["note"] = p.note;
    periods.push_back(std::move(rec));
  }
  json verdicts = json::array();
  for (const auto& v : report.verdicts) {
    verdicts.push_back({{"valve", valve_name(v.valve_index, n)},
                        {"mode", std::string(fault_mode_name(v.mode))},
                        {"confidence", v.confidence},
                        {"period", v.period}});
  }
  return {{"valves_per_dfcu", n},
          {"valves", names},
          {"periods", periods},
          {"filtered", variables_to_json(report.filtered)},
          {"table",
           {{"filtered_max", variables_to_json(report.table.filtered_max)},
            {"unfiltered_max", variables_to_json(report.table.unfiltered_max)}}},
          {"verdicts", verdicts}};
}

FaultReport report_from_json(const json& j) {
  if (!j.is_object()) throw InputError("report must be a JSON object");
  for (const char* key : {"valves_per_dfcu", "periods", "filtered", "table", "verdicts"}) {
    if (!j.contains(key)) throw InputError(std::string("report: missing '") + key + "'");
  }
  FaultReport r;
  try {
    r.valves_per_dfcu = j.at("valves_per_dfcu").get<std::size_t>();
    if (r.valves_per_dfcu < 1 || r.valves_per_dfcu > kMaxValvesPerDfcu) throw InputError("report: bad valves_per_dfcu");
    const std::size_t valves = 4 * r.valves_per_dfcu;
    for (const auto& p : j.at("periods")) {
      PeriodRecord rec;
      rec.index = p.at("index").get<std::size_t>();
      rec.start_sample = p.value("start_sample", std::size_t{0});
      rec.retained = p.value("retained", std::size_t{0});
      rec.status = parse_status(p.at("status").get<std::string>());
      rec.estimates.x_open = doubles(p, "estimates_open", valves, "report.periods");
      rec.estimates.x_closed = doubles(p, "estimates_closed", valves, "report.periods");
      rec.gated = p.at("gated").get<std::vector<bool>>();
      if (rec.gated.size() != 2 * valves) throw InputError("report.periods: 'gated' has the wrong length");
      rec.filtered.x_open = doubles(p, "filtered_open", valves, "report.periods");
      rec.filtered.x_closed = doubles(p, "filtered_closed", valves, "report.periods");
      rec.note = p.value("note", std::string());
      r.periods.push_back(std::move(rec));
    }
    r.filtered = variables_from_json(j.at("filtered"), valves, "report.filtered");
    const json& t = j.at("table");
    r.table.filtered_max = variables_from_json(t.at("filtered_max"), valves, "report.table.filtered_max");
    r.table.unfiltered_max = variables_from_json(t.at("unfiltered_max"), valves, "report.table.unfiltered_max");
    for (const auto& v : j.at("verdicts")) {
      Verdict verdict;
      verdict.valve_index = parse_valve_name(v.at("valve").get<std::string>(), r.valves_per_dfcu);
      verdict.mode = parse_mode(v.at("mode").get<std::string>());
      verdict.confidence = v.at("confidence").get<double>();
      verdict.period = v.at("period").get<std::size_t>();
      r.verdicts.push_back(verdict);
    }
  } catch (const json::exception& e) {
    throw InputError(std::string("report: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw InputError(std::string("report: ") + e.what());
  }
  return r;
}

void write_series_csv(std::ostream& out, const FaultReport& report) {
  const std::size_t n = report.valves_per_dfcu;
  out << "period,valve,x_open,x_closed,filtered_open,filtered_closed\n";
  for (const auto& p : report.periods) {
    for (std::size_t v = 0; v < 4 * n; ++v) {
      out << p.index << ',' << valve_name(v, n) << ',' << fmt9(p.estimates.x_open[v]) << ','
          << fmt9(p.estimates.x_closed[v]) << ',' << fmt9(p.filtered.x_open[v]) << ',' << fmt9(p.filtered.x_closed[v])
          << '\n';
    }
  }
}

std::string verdict_line(const Verdict& verdict, std::size_t valves_per_dfcu) {
  char buf[128];
  std::snprintf(buf, sizeof buf, "%s jammed-%s confidence=%.2f at period %zu",
                valve_name(verdict.valve_index, valves_per_dfcu).c_str(),
                std::string(fault_mode_name(verdict.mode)).c_str(), verdict.confidence, verdict.period);
  return buf;
}

std::string render_table(const FaultReport& report) {
  const std::size_t n = report.valves_per_dfcu;
  std::map<std::size_t, std::string> fault;
  for (const auto& v : report.verdicts) {
    auto& cell = fault[v.valve_index];
    if (!cell.empty()) cell += ',';
    cell += v.mode == FaultMode::JammedClosed ? "closed" : "open";
  }
  std::ostringstream out;
  out << "  valve   filtered          not filtered      fault\n";
  out << "          x_open  x_closed  x_open  x_closed\n";
  char buf[160];
  for (std::size_t v = 0; v < 4 * n; ++v) {
    const auto it = fault.find(v);
    std::snprintf(buf, sizeof buf, "%c %-6s  %6.2f  %8.2f  %6.2f  %8.2f  %s\n", it != fault.end() ? '*' : ' ',
                  valve_name(v, n).c_str(), report.table.filtered_max.x_open[v], report.table.filtered_max.x_closed[v],
                  report.table.unfiltered_max.x_open[v], report.table.unfiltered_max.x_closed[v],
                  it != fault.end() ? it->second.c_str() : "");
    out << buf;
  }
  std::size_t solved = 0;
  for (const auto& p : report.periods) solved += p.status == PeriodStatus::Solved;
  out << "\nperiods: " << report.periods.size() << " (" << solved << " solved)\n";
  if (report.verdicts.empty()) {
    out << "no faults identified\n";
  } else {
    for (const auto& v : report.verdicts) out << verdict_line(v, n) << '\n';
  }
  return out.str();
}

}  // namespace hydrodiag::io
