#include <doctest.h>

#include <cmath>
#include <numbers>

#include "stepfarm/world.hpp"

using namespace stepfarm;
using Eigen::Vector3d;

namespace {

constexpr double kPi = std::numbers::pi;

// Flat tread 0 from x = 0 to x = 2, riser of the given height at x = 2, lower
// ground below x = 0.
TerraceProfile two_level(double rise) {
  auto p = TerraceProfile::uniform(2, rise, 2.0);
  return p;
}

}  // namespace

TEST_CASE("piecewise linear holds its end values") {
  PiecewiseLinear f{{0.0, 1.0, 3.0}, {2.0, 4.0, 0.0}};
  CHECK(f(-5.0) == 2.0);
  CHECK(f(0.5) == doctest::Approx(3.0));
  CHECK(f(2.0) == doctest::Approx(2.0));
  CHECK(f(9.0) == 0.0);
  CHECK_THROWS_AS((PiecewiseLinear{{0.0, 0.0}, {1.0, 1.0}}).validate("w"), TerraceError);
}

TEST_CASE("terrace validation") {
  auto p = TerraceProfile::uniform(3, 0.3, 2.0);
  CHECK_NOTHROW(p.validate(0.6));
  p.steps[1].rise = 0.6;
  CHECK_THROWS_AS(p.validate(0.6), TerraceError);
  p.steps[1].rise = 0.3;
  p.steps[2].run = 0.5;
  CHECK_THROWS_AS(p.validate(0.6), TerraceError);
  p.steps[2].run = 2.0;
  p.lateral_width = {{0.0, 10.0}, {2.0, -1.0}};
  CHECK_THROWS_AS(p.validate(0.6), TerraceError);
}

TEST_CASE("terrace regions and heights") {
  auto p = TerraceProfile::uniform(3, 0.3, 2.0);
  CHECK(p.region(-0.1, 0.0) == -1);
  CHECK(p.ground(-0.1, 0.0) == doctest::Approx(-0.3));
  CHECK(p.ground(1.0, 0.0) == doctest::Approx(0.0));
  CHECK(p.ground(2.5, 0.0) == doctest::Approx(0.3));
  CHECK(p.ground(5.0, 0.0) == doctest::Approx(0.6));
  CHECK(std::isinf(p.ground(6.5, 0.0)));
  p.lateral_width = {{0.0, 10.0}, {2.0, 3.0}};
  CHECK(p.riser_x(1, 5.0) == doctest::Approx(2.5));
  CHECK(p.riser_x(2, 5.0) == doctest::Approx(5.0));
}

TEST_CASE("raycast examples") {
  const auto p = two_level(0.4);
  SUBCASE("straight down onto flat ground") {
    CHECK(raycast({1.0, 0.0, 0.5}, {0, 0, -1}, p) == doctest::Approx(0.5).epsilon(1e-12));
  }
  SUBCASE("horizontal at riser mid-height, one metre out") {
    CHECK(raycast({1.0, 0.0, 0.2}, {1, 0, 0}, p) == doctest::Approx(1.0).epsilon(1e-12));
  }
  SUBCASE("above every riser and looking away goes to no-return") {
    CHECK(std::isinf(raycast({1.0, 0.0, 0.5}, {-1, 0, 0}, p)));
  }
  SUBCASE("oblique ray onto a tread") {
    const Vector3d d = Vector3d(1, 0, -1).normalized();
    CHECK(raycast({0.5, 0.0, 0.3}, d, p) == doctest::Approx(0.3 * std::sqrt(2.0)).epsilon(1e-12));
  }
  SUBCASE("origin inside the ground reads zero") {
    CHECK(raycast({1.0, 0.0, -0.1}, {0, 0, -1}, p) == 0.0);
  }
  SUBCASE("a missing tread reads no-return") {
    auto q = p;
    q.steps[0].missing = true;
    CHECK(std::isinf(raycast({1.0, 0.0, 0.5}, {0, 0, -1}, q)));
  }
}

TEST_CASE("downward reading jumps by exactly the rise at an edge") {
  for (double rise : {0.1, 0.25, 0.4}) {
    const auto p = two_level(rise);
    const double z = 0.9;
    const double before = raycast({2.0 - 1e-9, 0.0, z}, {0, 0, -1}, p);
    const double after = raycast({2.0 + 1e-9, 0.0, z}, {0, 0, -1}, p);
    CHECK(before - after == doctest::Approx(rise).epsilon(1e-12));
  }
}

TEST_CASE("raycast against a skewed riser") {
  auto p = two_level(0.4);
  p.lateral_width = {{-1.0, 1.0}, {1.5, 2.5}};  // riser 1 runs from (1.5,-1) to (2.5,1)
  const double d = raycast({1.0, 0.0, 0.2}, {1, 0, 0}, p);
  CHECK(d == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("lidar layout") {
  RobotGeometry g;
  CHECK_NOTHROW(g.validate());
  const auto names = lidar_symbols(2);
  CHECK(names.size() == 16u + 2u);
  CHECK(names.front() == "L_fl");
  CHECK(names[8] == "L_d1");
  CHECK(names.back() == "F_r");
  CHECK(lidar_symbols(4).size() == 20u);
}

TEST_CASE("geometry helpers") {
  RobotGeometry g;
  CHECK(g.com_x() == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(g.front_plane() == doctest::Approx(g.pair_x[0] + g.d_ob - g.d_of));
  CHECK(g.lift(g.rest_extension()) == doctest::Approx(g.d_hb - g.leg_closed).epsilon(1e-9));
  CHECK(g.extension_for_lift(g.lift(0.1)) == doctest::Approx(0.1).epsilon(1e-9));
  CHECK(g.climb_cap() == doctest::Approx(0.4));
  CHECK(g.max_lift() > 0.4);

  auto bad = g;
  bad.wheel_pairs = 1;
  CHECK_THROWS(bad.validate());
  bad = g;
  bad.dummy_drop = 0.2;
  CHECK_THROWS(bad.validate());
}

TEST_CASE("rest state on flat ground") {
  RobotGeometry g;
  const auto p = TerraceProfile::uniform(2, 0.3, 3.0);
  const auto s = make_rest_state(g, p, 1.5, 0.0, 0.3);
  CHECK(s.z == doctest::Approx(g.d_hb).epsilon(1e-12));
  CHECK(s.pitch == doctest::Approx(0.0));
  CHECK(s.contacts.size() == 2u);
  const auto f = sense(s, g, p, {});
  for (const char* n : {"L_d1", "L_d2", "L_df", "L_db"}) CHECK(f.at(n) == doctest::Approx(g.d_hb).epsilon(1e-12));
  CHECK_THROWS_AS(f.at("L_d3"), std::out_of_range);
}

TEST_CASE("side lidars against a wall") {
  RobotGeometry g;
  const auto p = TerraceProfile::uniform(3, 0.3, 2.0);
  // heading -y puts riser 1 (x = 2) on the left
  SUBCASE("parallel at 0.8 m") {
    const double x = 2.0 - 0.8 - g.d_W / 2;
    const auto f = sense(make_rest_state(g, p, x, 0.0, -kPi / 2), g, p, {});
    CHECK(f.at("L_lf") == doctest::Approx(0.8).epsilon(1e-12));
    CHECK(f.at("L_lb") == doctest::Approx(0.8).epsilon(1e-12));
  }
  SUBCASE("yawed 5 degrees away from the wall") {
    const double phi = 5.0 * kPi / 180.0;
    const auto f = sense(make_rest_state(g, p, 1.0, 0.0, -kPi / 2 - phi), g, p, {});
    CHECK(std::abs(f.at("L_lf") - f.at("L_lb") - g.d_L * std::tan(phi)) < 1e-6);
  }
  SUBCASE("yaw recovered from the pair for |phi| < 20 degrees") {
    for (double deg = -19.0; deg <= 19.0; deg += 2.0) {
      const double phi = deg * kPi / 180.0;
      const auto f = sense(make_rest_state(g, p, 1.0, 0.0, -kPi / 2 - phi), g, p, {});
      CHECK(std::abs(std::atan((f.at("L_lf") - f.at("L_lb")) / g.d_L) - phi) < 1e-6);
    }
  }
}

TEST_CASE("noise is additive and seeded") {
  RobotGeometry g;
  const auto p = TerraceProfile::uniform(2, 0.3, 3.0);
  const auto s = make_rest_state(g, p, 1.5, 0.0, 0.0);
  NoiseSpec n;
  n.enabled = true;
  Rng a(11), b(11);
  const auto fa = sense(s, g, p, n, &a);
  const auto fb = sense(s, g, p, n, &b);
  CHECK(fa.values == fb.values);
  CHECK(fa.at("L_d1") != g.d_hb);
  CHECK(std::abs(fa.at("L_d1") - g.d_hb) < 0.05);
}

TEST_CASE("kinematics examples") {
  RobotGeometry g;
  g.wheelbase = 0.6;
  const auto p = TerraceProfile::uniform(2, 0.3, 10.0);
  const PlantParams plant;
  auto s = make_rest_state(g, p, 2.0, 0.0, 0.0);

  SUBCASE("straight: 1 m/s for 0.1 s advances 0.1 m") {
    const Commands c{1.0, 1.0, {0.0, 0.0}};
    auto r = step_kinematics(s, c, 0.05, g, p, plant);
    r = step_kinematics(r, c, 0.05, g, p, plant);
    CHECK(r.pose.x() - s.pose.x() == doctest::Approx(0.1).epsilon(1e-12));
    CHECK(r.pose.y() == doctest::Approx(0.0));
  }
  SUBCASE("opposite wheels: pure rotation") {
    const Commands c{-0.3, 0.3, {0.0, 0.0}};
    auto r = s;
    for (int k = 0; k < 20; ++k) r = step_kinematics(r, c, 0.01, g, p, plant);
    CHECK(r.pose.x() == doctest::Approx(s.pose.x()).epsilon(1e-12));
    CHECK(r.pose.y() == doctest::Approx(s.pose.y()).epsilon(1e-12));
    CHECK(r.pose.z() == doctest::Approx(0.2).epsilon(1e-12));
  }
  SUBCASE("arc length is preserved") {
    const Commands c{0.4, 0.5, {0.0, 0.0}};
    const auto r = step_kinematics(s, c, 0.05, g, p, plant);
    const double chord = (r.pose.head<2>() - s.pose.head<2>()).norm();
    const double dth = 0.1 / 0.6 * 0.05;
    const double arc = chord * dth / (2.0 * std::sin(dth / 2.0));
    CHECK(std::abs(arc - 0.45 * 0.05) < 1e-9);
  }
  SUBCASE("encoders report commanded travel") {
    const Commands c{0.2, 0.4, {0.0, 0.0}};
    const auto r = step_kinematics(s, c, 0.05, g, p, plant);
    CHECK(r.enc_left == doctest::Approx(0.01));
    CHECK(r.enc_right == doctest::Approx(0.02));
  }
  SUBCASE("time step bounds") {
    const auto c = Commands::zero(2);
    CHECK_THROWS_AS(step_kinematics(s, c, 0.0, g, p, plant), std::invalid_argument);
    CHECK_THROWS_AS(step_kinematics(s, c, 0.06, g, p, plant), std::invalid_argument);
    CHECK_THROWS_AS(step_kinematics(s, Commands{0, 0, {0.0}}, 0.01, g, p, plant), std::invalid_argument);
  }
  SUBCASE("actuators saturate at the stroke ends") {
    StepInfo info;
    const auto r = step_kinematics(s, Commands{0, 0, {-1.0, 0.0}}, 0.05, g, p, plant, {}, &info);
    CHECK(info.actuator_saturated);
    CHECK(r.scissor_ext[0] >= 0.0);
    CHECK(r.scissor_ext[0] == doctest::Approx(std::max(0.0, s.scissor_ext[0] - 0.05 * 0.05)));
  }
}

TEST_CASE("equal actuator rates keep the chassis level") {
  RobotGeometry g;
  const auto p = TerraceProfile::uniform(2, 0.3, 10.0);
  for (auto model : {PitchModel::kSupport, PitchModel::kDynamic}) {
    PlantParams plant;
    plant.pitch_model = model;
    auto s = make_rest_state(g, p, 2.0, 0.0, 0.0);
    double worst = 0.0;
    for (int k = 0; k < 1000; ++k) {
      const double r = (k / 250) % 2 == 0 ? 0.01 : -0.01;
      s = step_kinematics(s, Commands{0.0, 0.0, {r, r}}, 0.01, g, p, plant);
      worst = std::max(worst, std::abs(s.pitch));
    }
    CHECK(worst < 1e-9);
  }
}

TEST_CASE("disturbances") {
  RobotGeometry g;
  const auto p = TerraceProfile::uniform(2, 0.3, 10.0);
  PlantParams plant;
  plant.pitch_model = PitchModel::kDynamic;
  const auto s0 = make_rest_state(g, p, 2.0, 0.0, 0.1);
  const Commands c{0.3, 0.32, {0.0, 0.0}};

  SUBCASE("zero magnitude is bit-identical to none") {
    const std::vector<Disturbance> ds{{DisturbanceKind::kPayloadTorque, 0.0, 0.0, 5.0},
                                      {DisturbanceKind::kLateralSlip, 0.0, 0.0, 5.0},
                                      {DisturbanceKind::kWheelSlip, 0.0, 0.0, 5.0}};
    auto a = s0, b = s0;
    for (int k = 0; k < 300; ++k) {
      a = step_kinematics(a, c, 0.01, g, p, plant);
      b = step_kinematics(b, c, 0.01, g, p, plant, ds);
    }
    CHECK(a.pose == b.pose);
    CHECK(a.pitch == b.pitch);
    CHECK(a.scissor_ext == b.scissor_ext);
  }
  SUBCASE("payload torque pitches the chassis nose-down with no correction") {
    const std::vector<Disturbance> ds{{DisturbanceKind::kPayloadTorque, 5.0, 0.0, 100.0}};
    auto s = s0;
    for (int k = 0; k < 1000; ++k) s = step_kinematics(s, Commands::zero(2), 0.01, g, p, plant, ds);
    CHECK(s.pitch < -1e-3);
  }
  SUBCASE("window is half-open") {
    const Disturbance d{DisturbanceKind::kLateralSlip, 0.1, 1.0, 2.0};
    CHECK_FALSE(d.active(0.999));
    CHECK(d.active(1.0));
    CHECK_FALSE(d.active(2.0));
  }
  SUBCASE("lateral slip moves the body sideways, unseen by the encoders") {
    const std::vector<Disturbance> ds{{DisturbanceKind::kLateralSlip, 0.1, 0.0, 1.0}};
    auto s = make_rest_state(g, p, 2.0, 0.0, 0.0);
    double enc = 0.0;
    for (int k = 0; k < 100; ++k) {
      s = step_kinematics(s, Commands::zero(2), 0.01, g, p, plant, ds);
      enc += s.enc_left + s.enc_right;
    }
    CHECK(s.pose.y() == doctest::Approx(0.1).epsilon(1e-9));
    CHECK(enc == 0.0);
  }
  SUBCASE("wheel slip on the right turns the robot right") {
    const std::vector<Disturbance> ds{{DisturbanceKind::kWheelSlip, 0.2, 0.0, 10.0}};
    auto s = make_rest_state(g, p, 2.0, 0.0, 0.0);
    for (int k = 0; k < 100; ++k) s = step_kinematics(s, Commands{0.3, 0.3, {0.0, 0.0}}, 0.01, g, p, plant, ds);
    CHECK(s.pose.z() < 0.0);
  }
}

TEST_CASE("support model") {
  RobotGeometry g;
  const auto p = TerraceProfile::uniform(2, 0.3, 3.0);
  SUBCASE("retracting the front pair on flat ground lands the front dummy") {
    auto s = make_rest_state(g, p, 1.5, 0.0, 0.0);
    s.scissor_ext[0] = 0.0;
    settle_on_supports(s, g, p);
    CHECK(s.pitch < 0.0);
    bool dummy = false;
    for (const auto& c : s.contacts) dummy = dummy || c.kind == SupportKind::kDummy;
    CHECK(dummy);
  }
  SUBCASE("a wheel inside a wall is a collision") {
    auto s = make_rest_state(g, p, 1.5, 0.0, 0.0);
    s.pose.x() = 6.0 - g.pair_x[0] + 0.01;
    CHECK_THROWS_AS(settle_on_supports(s, g, p), CollisionError);
  }
  SUBCASE("driving the front wheel into a riser is a collision") {
    const PlantParams plant;
    auto s = make_rest_state(g, p, 2.5, 0.0, 0.0);
    CHECK_THROWS_AS(
        [&] {
          for (int k = 0; k < 2000; ++k) s = step_kinematics(s, Commands{0.3, 0.3, {0.0, 0.0}}, 0.01, g, p, plant);
        }(),
        CollisionError);
  }
}
