#include <doctest.h>

#include <cmath>
#include <random>

#include "hydrodiag/model.hpp"
#include "oracles.hpp"

using namespace hydrodiag;

TEST_CASE("valve names round-trip in valve-word order") {
  CHECK(valve_name(0, 5) == "PA1");
  CHECK(valve_name(9, 5) == "BT5");
  CHECK(valve_name(12, 5) == "AT3");
  CHECK(valve_name(19, 5) == "PB5");
  for (std::size_t v = 0; v < 20; ++v) CHECK(parse_valve_name(valve_name(v, 5), 5) == v);
  CHECK(parse_valve_name("at3", 5) == 12);
  CHECK_THROWS_WITH_AS(parse_valve_name("AT9", 5), doctest::Contains("valve index out of range"),
                       std::invalid_argument);
  CHECK_THROWS_AS(parse_valve_name("XX1", 5), std::invalid_argument);
  CHECK_THROWS_AS(parse_valve_name("AT", 5), std::invalid_argument);
}

TEST_CASE("valve word parsing and DFCU codes") {
  const auto w = ValveWord::parse("10000_00000_00100_00001");
  CHECK(w.size() == 20);
  CHECK(w[0]);
  CHECK(w[12]);
  CHECK(w[19]);
  CHECK(w.count() == 3);
  CHECK(w.dfcu_code(Dfcu::PA) == 1u);
  CHECK(w.dfcu_code(Dfcu::AT) == 4u);
  CHECK(w.dfcu_code(Dfcu::PB) == 16u);
  ValveWord u(20);
  u.set_dfcu_code(Dfcu::BT, 0b10110);
  CHECK(u.to_string() == "00000011010000000000");
  CHECK_THROWS_AS(ValveWord::parse("10x"), std::invalid_argument);
}

TEST_CASE("orifice kernel matches the turbulent law outside the smoothed band") {
  for (double dp : {-5e6, -2e3, 1e3, 7.5e4, 1e7}) {
    CHECK(valve_flow(true, {2e-8, 0.5}, dp, 1e3) == doctest::Approx(oracle::orifice(2e-8, 0.5, dp)).epsilon(1e-12));
  }
  // Value and slope are continuous at the band edge, and the kernel stays odd.
  const double d = 1e3;
  CHECK(orifice_kernel(d * (1 - 1e-12), 0.5, d) == doctest::Approx(std::sqrt(d)).epsilon(1e-9));
  CHECK(orifice_kernel_derivative(d * (1 - 1e-12), 0.5, d) ==
        doctest::Approx(0.5 / std::sqrt(d)).epsilon(1e-9));
  CHECK(orifice_kernel(-300.0, 0.5, d) == doctest::Approx(-orifice_kernel(300.0, 0.5, d)));
  CHECK(orifice_kernel(0.0, 0.5, d) == 0.0);
}

TEST_CASE("flow partition: valve_flow(u) + complement_flow(u) = valve_flow(open)") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> dp(-1e7, 1e7), kv(1e-9, 1e-7);
  for (int i = 0; i < 500; ++i) {
    const ValveParams p{kv(rng), 0.5};
    const double x = dp(rng);
    for (bool u : {false, true}) {
      CHECK(valve_flow(u, p, x) + complement_flow(u, p, x) == valve_flow(true, p, x));
      // exactly one of the two is nonzero
      CHECK(((valve_flow(u, p, x) == 0.0) != (complement_flow(u, p, x) == 0.0)));
    }
  }
}

TEST_CASE("balance residual equals a hand-computed flow sum") {
  const auto c = SystemConfig::make_default();
  const auto w = ValveWord::parse("10000_01000_00000_00000");  // PA1 and BT2 open
  const PressureState p{10e6, 4e6, 3e6};
  const double q_pa = oracle::orifice(1e-8, 0.5, 6e6);
  const double q_bt = oracle::orifice(2e-8, 0.5, 3e6);
  CHECK(balance_residual(c, w, p) == doctest::Approx(q_pa / 2e-3 - q_bt / 1e-3).epsilon(1e-12));
}

TEST_CASE("steady state satisfies the three equations for random feasible states") {
  const auto c = SystemConfig::make_default();
  std::mt19937_64 rng(5);
  std::uniform_int_distribution<unsigned> code(1, 31);
  std::uniform_real_distribution<double> load(-8e3, 8e3);
  int solved = 0;
  for (int i = 0; i < 300; ++i) {
    ValveWord w(20);
    w.set_dfcu_code(Dfcu::PA, code(rng));
    w.set_dfcu_code(Dfcu::BT, code(rng));
    try {
      const auto ss = steady_state_solve(c, w, 10e6, load(rng));
      for (double r : steady_state_residuals(c, w, ss)) CHECK(std::abs(r) <= 1e-9);
      CHECK(std::abs(balance_residual(c, w, ss.pressure)) <= 1e-9);
      CHECK(ss.velocity > 0.0);
      ++solved;
    } catch (const SolveError& e) {
      CHECK(e.kind() == SolveErrorKind::OutOfRange);
    }
  }
  CHECK(solved > 150);
}

TEST_CASE("symmetric configuration settles at the mid pressure") {
  // Matching valves on both paths of both chambers and the force that balances equal
  // chamber pressures: p_a = p_b = (p_s + p_t) / 2 and the piston is still.
  auto c = SystemConfig::make_default();
  c.tank_pressure = 1e5;
  const double p_s = 12e6;
  const double mid = 0.5 * (p_s + c.tank_pressure);
  const double force = (c.area_a - c.area_b) * mid;
  for (unsigned code : {1u, 6u, 21u, 31u}) {
    ValveWord w(20);
    for (Dfcu d : kDfcuOrder) w.set_dfcu_code(d, code);
    const auto ss = steady_state_solve(c, w, p_s, force);
    CHECK(ss.pressure.p_a == doctest::Approx(mid).epsilon(1e-9));
    CHECK(ss.pressure.p_b == doctest::Approx(mid).epsilon(1e-9));
    CHECK(std::abs(ss.velocity) < 1e-9);
  }
}

TEST_CASE("steady-state errors") {
  const auto c = SystemConfig::make_default();
  CHECK_THROWS_AS(steady_state_solve(c, ValveWord(20), 10e6, 0.0), SolveError);
  CHECK_THROWS_AS(steady_state_solve(c, ValveWord(19), 10e6, 0.0), std::invalid_argument);
  // A load far beyond what the supply can hold drives a chamber negative.
  auto w = ValveWord::parse("10000_10000_00000_00000");
  try {
    steady_state_solve(c, w, 10e6, 1e6);
    FAIL("expected an out-of-range steady state");
  } catch (const SolveError& e) {
    CHECK(e.kind() == SolveErrorKind::OutOfRange);
  }
}

TEST_CASE("config validation") {
  auto c = SystemConfig::make_default();
  CHECK_NOTHROW(c.validate());
  c.area_b = -1.0;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c = SystemConfig::make_default();
  c.dfcus[2].pop_back();
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
}
