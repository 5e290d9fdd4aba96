// Serial vs OpenMP period solves on a simulated 60 s duty cycle, plus the cost of one
// full 100-sample period (140 x 40 system build and solve).
//
//   bench_periods [repeats] [seconds]

#include <omp.h>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <vector>

#include "hydrodiag/pipeline.hpp"

using namespace hydrodiag;
using Clock = std::chrono::steady_clock;

namespace {

double ms_since(Clock::time_point start) {
  return std::chrono::duration<double, std::milli>(Clock::now() - start).count();
}

bool same(const std::vector<PeriodSolution>& a, const std::vector<PeriodSolution>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].status != b[i].status || a[i].estimates.x_open != b[i].estimates.x_open ||
        a[i].estimates.x_closed != b[i].estimates.x_closed) {
      return false;
    }
  }
  return true;
}

}  // namespace

int main(int argc, char** argv) {
  const int repeats = argc > 1 ? std::max(1, std::atoi(argv[1])) : 5;
  const double seconds = argc > 2 ? std::atof(argv[2]) : 60.0;

  const SystemConfig config = SystemConfig::make_default();
  DutyCycleOptions duty;
  duty.duration = seconds;
  duty.seed = 3;
  Scenario scenario = make_duty_cycle(config, duty);
  scenario.seed = 3;
  const Trace trace = simulate(config, scenario, {parse_fault("AT3:closed", 5)});

  const DiagnosticsConfig cfg;
  const auto periods = segment_trace(trace, cfg);
  std::printf("trace: %zu samples, %zu periods, %d threads\n", trace.samples.size(), periods.size(),
              omp_get_max_threads());

  double best_serial = 1e300, best_parallel = 1e300;
  std::vector<PeriodSolution> serial, parallel;
  for (int r = 0; r < repeats; ++r) {
    auto t0 = Clock::now();
    serial = solve_periods_serial(config, periods, cfg);
    best_serial = std::min(best_serial, ms_since(t0));
    t0 = Clock::now();
    parallel = solve_periods_parallel(config, periods, cfg);
    best_parallel = std::min(best_parallel, ms_since(t0));
  }
  std::printf("serial   %9.2f ms  (%.3f ms/period)\n", best_serial, best_serial / periods.size());
  std::printf("parallel %9.2f ms  (%.3f ms/period)\n", best_parallel, best_parallel / periods.size());
  std::printf("speedup  %9.2fx   results identical: %s\n", best_serial / best_parallel,
              same(serial, parallel) ? "yes" : "NO");

  // One full period without spike rejection or the noise floor: 100 data rows + 40 penalty rows.
  std::vector<double> times;
  for (std::size_t p = 0; p < periods.size(); ++p) {
    const std::span<const Sample> window(trace.samples.data() + p * cfg.period_len, cfg.period_len);
    const auto t0 = Clock::now();
    const SensingSystem system = build_system(config, window, cfg.penalty);
    if (!system.uninformative) estimate_faults(system, cfg.tau);
    times.push_back(ms_since(t0));
  }
  std::sort(times.begin(), times.end());
  std::printf("single 140x40 period: median %.3f ms, max %.3f ms\n", times[times.size() / 2], times.back());
  return 0;
}
