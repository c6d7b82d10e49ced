#include <cmath>
#include <random>

#include "doctest.h"
#include "stepfarm/controllers.hpp"

using namespace stepfarm;

TEST_CASE("pitch control: level chassis splits the sum evenly") {
  PitchPidState st;
  const auto r = pitch_control(0.0, 0.0, st, 0.01);
  CHECK(r.A_f == doctest::Approx(st.c1 / 2).epsilon(1e-15));
  CHECK(r.A_b == doctest::Approx(st.c1 / 2).epsilon(1e-15));
}

TEST_CASE("pitch control: nose-up lowers the front relative to the back") {
  PitchPidState st;
  const auto r = pitch_control(deg2rad(2.0), 0.0, st, 0.01);
  CHECK(r.A_f < r.A_b);
  PitchPidState st2;
  const auto q = pitch_control(-deg2rad(2.0), 0.0, st2, 0.01);
  CHECK(q.A_f > q.A_b);
}

TEST_CASE("pitch control: integral action grows the difference under a held error") {
  PitchPidState st;
  st.k_d = 0.0;
  st.integral_max = 10.0;
  double prev = 0.0;
  for (int k = 0; k < 50; ++k) {
    const auto r = pitch_control(0.01, 0.0, st, 0.01);
    const double diff = std::abs(r.A_f - r.A_b);
    if (k > 0) CHECK(diff > prev);
    prev = diff;
  }
}

TEST_CASE("pitch control: sum equation holds exactly before saturation") {
  std::mt19937_64 gen(7);
  std::uniform_real_distribution<double> th(-0.01, 0.01), dv(-0.02, 0.02);
  PitchPidState st;
  st.rate_limit = 10.0;  // keep clear of saturation
  for (int k = 0; k < 1000; ++k) {
    const double d = dv(gen);
    const auto r = pitch_control(th(gen), d, st, 0.01);
    CHECK(r.A_f + r.A_b == doctest::Approx(st.c1 - st.c2 * d).epsilon(1e-14));
  }
}

TEST_CASE("pitch control: saturation keeps the difference channel") {
  PitchPidState st;
  st.k_p = 5.0;
  const auto r = pitch_control(-0.05, 0.0, st, 0.01);
  CHECK(std::abs(r.A_f) <= st.rate_limit + 1e-15);
  CHECK(std::abs(r.A_b) <= st.rate_limit + 1e-15);
  CHECK(r.A_f - r.A_b == doctest::Approx(2 * st.rate_limit));
  CHECK_THROWS_AS(pitch_control(0.0, 0.0, st, 0.0), std::invalid_argument);
}

TEST_CASE("gain adaptation") {
  SUBCASE("fixed point") {
    PitchPidState st;
    st.gamma_p = st.gamma_i = st.gamma_d = 0.3;
    const PitchPidState before = st;
    adapt_gains(0.0, 0.0, st, 0.01);
    CHECK(st.k_p == before.k_p);
    CHECK(st.k_i == before.k_i);
    CHECK(st.k_d == before.k_d);
  }
  SUBCASE("zero rates reduce to fixed-gain PID") {
    PitchPidState a, b;
    std::mt19937_64 gen(3);
    std::normal_distribution<double> th(0.0, 0.02);
    for (int k = 0; k < 500; ++k) {
      const double t = th(gen);
      const auto ra = pitch_tick(t, 0.0, a, 0.01);
      const auto rb = pitch_control(t, 0.0, b, 0.01);
      CHECK(ra.A_f == rb.A_f);
      CHECK(ra.A_b == rb.A_b);
    }
    CHECK(a.k_p == 0.5);
    CHECK(a.k_i == 0.2);
    CHECK(a.k_d == 0.1);
  }
  SUBCASE("gains stay in [0, cap] for arbitrary bounded streams") {
    PitchPidState st;
    st.gamma_p = 50.0;
    st.gamma_i = 50.0;
    st.gamma_d = 50.0;
    std::mt19937_64 gen(11);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (int k = 0; k < 20000; ++k) {
      adapt_gains(u(gen), 100.0 * u(gen), st, 0.01);
      REQUIRE(st.k_p >= 0.0);
      REQUIRE(st.k_p <= st.k_p_cap);
      REQUIRE(st.k_i >= 0.0);
      REQUIRE(st.k_i <= st.k_i_cap);
      REQUIRE(st.k_d >= 0.0);
      REQUIRE(st.k_d <= st.k_d_cap);
    }
  }
  SUBCASE("filter uses the pre-update value") {
    PitchPidState st;
    st.gamma_i = 1.0;
    adapt_gains(0.5, 0.0, st, 0.01);
    CHECK(st.k_i == 0.2);  // e_m was still zero
    CHECK(st.e_m == doctest::Approx(0.5 * (1.0 - std::exp(-0.05))));
    adapt_gains(0.5, 0.0, st, 0.01);
    CHECK(st.k_i == doctest::Approx(0.2 + 0.5 * (1.0 - std::exp(-0.05))));
  }
  SUBCASE("validate") {
    PitchPidState st;
    st.tau_filter = 0.0;
    CHECK_THROWS_AS(st.validate(), std::invalid_argument);
    st.tau_filter = 0.2;
    st.k_p = 6.0;
    CHECK_THROWS_AS(st.validate(), std::invalid_argument);
  }
}

TEST_CASE("pure pursuit") {
  PursuitParams p;
  CHECK(pursuit_steer(0.0, 1.0, 0.2, 0.2, p) == 0.0);

  p.k_dyaw = 0.0;
  const double d = pursuit_steer(deg2rad(10.0), 1.0, 0.0, 0.0, p);
  // atan(2 * 0.6 * sin 10 deg / 0.8)
  CHECK(rad2deg(d) == doctest::Approx(14.599558801741585).epsilon(1e-12));

  p.k_dyaw = 0.5;
  const double base = pursuit_steer_undamped(deg2rad(5.0), 1.0, p);
  CHECK(pursuit_steer(deg2rad(5.0), 1.0, 0.3, 0.2, p) - base == doctest::Approx(0.05).epsilon(1e-12));

  CHECK(pursuit_steer(deg2rad(80.0), 0.0, 5.0, 0.0, p) == doctest::Approx(deg2rad(40.0)));
  CHECK(pursuit_steer(-deg2rad(80.0), 0.0, -5.0, 0.0, p) == doctest::Approx(-deg2rad(40.0)));

  for (double a = -1.5; a <= 1.5; a += 0.01) {
    for (double v : {0.0, 0.3, 1.0, -0.7}) {
      const double u = pursuit_steer_undamped(a, v, p);
      CHECK(std::tan(u) * lookahead(v, p) == doctest::Approx(2 * p.wheelbase * std::sin(a)).epsilon(1e-12));
    }
  }
}

TEST_CASE("wheel speeds") {
  const auto w0 = wheel_speeds(0.8, 0.0, 1.0, 0.6);
  CHECK(w0.v_l == 0.8);
  CHECK(w0.v_r == 0.8);

  const auto w = wheel_speeds(1.0, deg2rad(30.0), 1.0, 0.6);
  CHECK(w.v_l == doctest::Approx(0.7).epsilon(1e-12));
  CHECK(w.v_r == doctest::Approx(1.3).epsilon(1e-12));

  const auto m = wheel_speeds(1.0, -deg2rad(30.0), 1.0, 0.6);
  CHECK(m.v_l == doctest::Approx(w.v_r).epsilon(1e-15));
  CHECK(m.v_r == doctest::Approx(w.v_l).epsilon(1e-15));

  for (double a = -1.0; a <= 1.0; a += 0.05) {
    const auto s = wheel_speeds(0.37, a, 0.9, 0.6);
    CHECK((s.v_l + s.v_r) / 2 == doctest::Approx(0.37).epsilon(1e-15));
    const auto t = wheel_speeds_from_steer(0.37, a, 0.6);
    CHECK((t.v_l + t.v_r) / 2 == doctest::Approx(0.37).epsilon(1e-15));
  }
  CHECK_THROWS_AS(wheel_speeds(1.0, 0.1, 0.0, 0.6), std::invalid_argument);
}

TEST_CASE("seed metering") {
  SeederParams p;
  const auto z = seed_rate(0.0, p);
  CHECK(z.omega == 0.0);
  CHECK(z.pulses == 0.0);

  const auto r = seed_rate(1.0, p);
  CHECK(r.omega == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(r.pulses == doctest::Approx(200.0).epsilon(1e-12));
  CHECK(r.rpm() == doctest::Approx(60.0));

  const auto r2 = seed_rate(2.0, p);
  CHECK(r2.omega == doctest::Approx(2 * r.omega));
  CHECK(r2.pulses == doctest::Approx(2 * r.pulses));

  const auto legacy = seed_rate(1.0, p, true);
  CHECK(legacy.pulses == doctest::Approx(deg2rad(1.8)));

  CHECK_THROWS_AS(seed_rate(-0.1, p), std::invalid_argument);
  p.n_t = 0;
  CHECK_THROWS_AS(seed_rate(1.0, p), std::invalid_argument);
}

TEST_CASE("sprayer") {
  SprayerState s;
  s = sprayer_select(SprayMode::kOff, 0.0, s);
  CHECK(!s.water_valve);
  CHECK(!s.pesticide_valve);
  CHECK(s.pump_duty == 0.0);

  s = sprayer_select(SprayMode::kWater, 0.5, s);
  CHECK(s.water_valve);
  CHECK(!s.pesticide_valve);
  CHECK(s.pump_duty == 0.5);

  s = sprayer_select(SprayMode::kPesticide, 0.5, s);
  CHECK(!s.water_valve);
  CHECK(!s.pesticide_valve);
  CHECK(s.pump_duty == 0.0);
  s = sprayer_select(SprayMode::kPesticide, 0.5, s);
  CHECK(s.pesticide_valve);
  CHECK(!s.water_valve);

  CHECK_THROWS_AS(sprayer_select(true, true, 0.5, s), SprayerConflict);
  CHECK_THROWS_AS(sprayer_select(SprayMode::kWater, 1.5, s), std::invalid_argument);

  // random command stream never opens both valves, pump only with a valve
  std::mt19937_64 gen(5);
  std::uniform_int_distribution<int> pick(0, 2);
  SprayerState t;
  for (int k = 0; k < 5000; ++k) {
    t = sprayer_select(static_cast<SprayMode>(pick(gen)), 0.7, t);
    REQUIRE(!(t.water_valve && t.pesticide_valve));
    if (t.pump_duty > 0.0) REQUIRE((t.water_valve || t.pesticide_valve));
  }
}
