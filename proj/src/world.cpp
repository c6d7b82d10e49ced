#include "stepfarm/world.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

namespace stepfarm {

namespace {

constexpr double kFarY = 1e4;
constexpr double kContactTol = 1e-7;

double cross2(const Eigen::Vector2d& a, const Eigen::Vector2d& b) { return a.x() * b.y() - a.y() * b.x(); }

double wrap_angle(double a) {
  a = std::remainder(a, 2.0 * std::numbers::pi);
  return a;
}

}  // namespace

// ---------------------------------------------------------------- PiecewiseLinear

double PiecewiseLinear::operator()(double x) const {
  if (s.empty()) throw std::logic_error("evaluating an empty piecewise-linear function");
  if (x <= s.front()) return v.front();
  if (x >= s.back()) return v.back();
  const auto it = std::upper_bound(s.begin(), s.end(), x);
  const std::size_t j = static_cast<std::size_t>(it - s.begin());
  const double w = (x - s[j - 1]) / (s[j] - s[j - 1]);
  return v[j - 1] + w * (v[j] - v[j - 1]);
}

double PiecewiseLinear::min_value() const { return *std::min_element(v.begin(), v.end()); }

void PiecewiseLinear::validate(const char* what) const {
  if (s.size() != v.size()) throw TerraceError(std::string(what) + ": breakpoints and values differ in length");
  for (std::size_t j = 1; j < s.size(); ++j) {
    if (!(s[j] > s[j - 1])) throw TerraceError(std::string(what) + ": breakpoints must increase");
  }
  for (double x : v) {
    if (!std::isfinite(x)) throw TerraceError(std::string(what) + ": values must be finite");
  }
}

// ---------------------------------------------------------------- TerraceProfile

void TerraceProfile::validate(double robot_length) const {
  if (steps.empty()) throw TerraceError("terrace needs at least one step");
  lateral_width.validate("lateral_width");
  if (!lateral_width.empty() && !(lateral_width.min_value() > 0.0)) {
    throw TerraceError("lateral width must be positive everywhere");
  }
  for (std::size_t k = 0; k < steps.size(); ++k) {
    const auto& st = steps[k];
    const std::string tag = "step " + std::to_string(k);
    if (!(st.rise > 0.0 && st.rise <= 0.5)) throw TerraceError(tag + ": rise must lie in (0, 0.5]");
    st.width.validate(tag.c_str());
    double depth = st.run;
    if (!st.width.empty()) depth = st.width.min_value();
    else if (!lateral_width.empty()) depth = lateral_width.min_value();
    if (!(depth > robot_length)) throw TerraceError(tag + ": tread must be deeper than the robot");
  }
  if (!std::isfinite(x0)) throw TerraceError("x0 must be finite");
}

double TerraceProfile::tread_width(int k, double y) const {
  const auto& st = steps.at(static_cast<std::size_t>(k));
  if (!st.width.empty()) return st.width(y);
  if (!lateral_width.empty()) return lateral_width(y);
  return st.run;
}

double TerraceProfile::riser_x(int k, double y) const {
  double x = x0;
  for (int j = 0; j < k; ++j) x += tread_width(j, y);
  return x;
}

int TerraceProfile::region(double x, double y) const {
  double X = x0;
  if (x < X) return -1;
  for (int k = 0; k < count(); ++k) {
    X += tread_width(k, y);
    if (x < X) return k;
  }
  return count();
}

double TerraceProfile::region_height(int r) const {
  if (r >= count()) return std::numeric_limits<double>::infinity();
  if (r < 0) return -steps.front().rise;
  if (steps[static_cast<std::size_t>(r)].missing) return -std::numeric_limits<double>::infinity();
  double z = 0.0;
  for (int j = 1; j <= r; ++j) z += steps[static_cast<std::size_t>(j)].rise;
  return z;
}

std::vector<Eigen::Vector2d> TerraceProfile::riser_polyline(int k) const {
  std::vector<double> ys;
  auto add = [&ys](const PiecewiseLinear& f) { ys.insert(ys.end(), f.s.begin(), f.s.end()); };
  add(lateral_width);
  for (int j = 0; j < k; ++j) add(steps[static_cast<std::size_t>(j)].width);
  std::sort(ys.begin(), ys.end());
  ys.erase(std::unique(ys.begin(), ys.end()), ys.end());
  std::vector<Eigen::Vector2d> pts;
  pts.reserve(ys.size() + 2);
  pts.emplace_back(riser_x(k, -kFarY), -kFarY);
  for (double y : ys) pts.emplace_back(riser_x(k, y), y);
  pts.emplace_back(riser_x(k, kFarY), kFarY);
  return pts;
}

TerraceProfile TerraceProfile::uniform(int n_steps, double rise, double run) {
  TerraceProfile p;
  p.steps.assign(static_cast<std::size_t>(n_steps), TerraceStep{rise, run, {}, false});
  return p;
}

double raycast(const Eigen::Vector3d& origin, const Eigen::Vector3d& direction, const TerraceProfile& profile,
               double max_range) {
  const Eigen::Vector2d o = origin.head<2>();
  const Eigen::Vector2d d = direction.head<2>();
  const double oz = origin.z();
  const double dz = direction.z();

  std::vector<double> ts;
  if (d.squaredNorm() > 1e-24) {
    for (int k = 0; k <= profile.count(); ++k) {
      const auto poly = profile.riser_polyline(k);
      for (std::size_t j = 0; j + 1 < poly.size(); ++j) {
        const Eigen::Vector2d e = poly[j + 1] - poly[j];
        const double den = cross2(d, e);
        if (std::abs(den) < 1e-15) continue;
        const Eigen::Vector2d w = poly[j] - o;
        const double t = cross2(w, e) / den;
        const double u = cross2(w, d) / den;
        if (u < 0.0 || u > 1.0 || t <= 1e-12 || t > max_range) continue;
        ts.push_back(t);
      }
    }
    std::sort(ts.begin(), ts.end());
    ts.erase(std::unique(ts.begin(), ts.end(), [](double a, double b) { return b - a < 1e-12; }), ts.end());
  }
  ts.push_back(max_range);

  double a = 0.0;
  for (double b : ts) {
    const double mid = 0.5 * (a + b);
    const Eigen::Vector2d pm = o + mid * d;
    const double h = profile.ground(pm.x(), pm.y());
    const double za = oz + a * dz;
    if (za < h) return a;  // riser face, wall, or an origin inside the ground
    if (dz < 0.0 && std::isfinite(h)) {
      const double t = (h - oz) / dz;
      if (t <= b) return std::max(t, a);
    }
    a = b;
  }
  return kNoReturn;
}

// ---------------------------------------------------------------- geometry

void RobotGeometry::validate() const {
  auto pos = [](double x, const char* name) {
    if (!(x > 0.0) || !std::isfinite(x)) throw std::invalid_argument(std::string(name) + " must be positive");
  };
  pos(d_W, "d_W");
  pos(d_L, "d_L");
  pos(d_hb, "d_hb");
  pos(d_of, "d_of");
  pos(d_ob, "d_ob");
  pos(L_db_mount, "L_db_mount");
  pos(wheelbase, "wheelbase");
  pos(mass, "mass");
  pos(half_length, "half_length");
  pos(leg_closed, "leg_closed");
  pos(dummy_drop, "dummy_drop");
  pos(max_lip, "max_lip");
  pos(max_climb, "max_climb");
  pos(actuator_stroke, "actuator_stroke");
  if (wheel_pairs < 2) throw std::invalid_argument("wheel_pairs must be at least 2");
  if (static_cast<int>(pair_x.size()) != wheel_pairs) throw std::invalid_argument("pair_x must list every wheel pair");
  if (dummy_pairs != static_cast<int>(inner_dummy_x.size()) + 2) {
    throw std::invalid_argument("dummy_pairs must equal the inner dummies plus the two outer ones");
  }
  const auto dx = dummy_x();
  auto descending = [](const std::vector<double>& xs) {
    for (std::size_t j = 1; j < xs.size(); ++j)
      if (!(xs[j] < xs[j - 1])) return false;
    return true;
  };
  if (!descending(pair_x) || !descending(dx)) throw std::invalid_argument("axles must be listed front to back");
  if (dx.front() > half_length || dx.back() < -half_length) throw std::invalid_argument("dummy wheels outside the chassis");
  if (front_plane() > half_length || back_plane < -half_length) throw std::invalid_argument("lidar planes outside the chassis");
  if (!(leg_closed < dummy_drop && dummy_drop < d_hb)) {
    throw std::invalid_argument("need leg_closed < dummy_drop < d_hb so dummies hang clear at rest");
  }
  if (d_hb - leg_closed > max_lift()) throw std::invalid_argument("rest height is beyond the scissor range");
  if (!(bogie_mass_fraction >= 0.0 && bogie_mass_fraction * wheel_pairs < 1.0)) {
    throw std::invalid_argument("bogie mass fraction out of range");
  }
  check_geometry(scissor);
}

std::vector<double> RobotGeometry::dummy_x() const {
  std::vector<double> out;
  out.reserve(inner_dummy_x.size() + 2);
  out.push_back(pair_x.front() + d_ob);
  out.insert(out.end(), inner_dummy_x.begin(), inner_dummy_x.end());
  out.push_back(pair_x.back() - d_ob);
  return out;
}

double RobotGeometry::com_x() const {
  double m = 0.0;
  for (double x : pair_x) m += bogie_mass_fraction * x;
  return m;  // chassis share sits at the geometric centre, x = 0
}

double RobotGeometry::lift(double ext) const {
  const double l0 = actuator_length(scissor, scissor.theta_min);
  const double th = theta_for_length(scissor, l0 + std::max(ext, 0.0));
  return height(scissor, th) - height(scissor, scissor.theta_min);
}

double RobotGeometry::extension_for_lift(double lift) const {
  const double s = std::sin(scissor.theta_min) + lift / (scissor.n * scissor.D);
  if (s >= 1.0) throw std::domain_error("lift beyond the scissor's reach");
  const double th = std::asin(s);
  return actuator_length(scissor, th) - actuator_length(scissor, scissor.theta_min);
}

double RobotGeometry::climb_cap() const {
  // headroom of 1 mm for the tick on which the lift gate flips
  return std::min(max_climb, max_lift() - (d_hb - leg_closed) - 1e-3);
}

double RobotGeometry::failsafe_mount_z() const { return L_db_mount * std::tan(failsafe_angle) - d_hb; }

double RobotGeometry::side_down_mount_z() const { return L_db_mount * std::tan(side_down_angle) - d_hb; }

// ---------------------------------------------------------------- state

double RobotState::pair_leg(const RobotGeometry& g, int i) const {
  return g.leg_closed + g.lift(scissor_ext.at(static_cast<std::size_t>(i)));
}

Eigen::Vector3d RobotState::body_to_world(const Eigen::Vector3d& b) const {
  const double c = std::cos(pose.z()), s = std::sin(pose.z());
  return {pose.x() + c * b.x() - s * b.y(), pose.y() + s * b.x() + c * b.y(), z + b.x() * std::tan(pitch) + b.z()};
}

Eigen::Vector3d RobotState::body_dir_to_world(const Eigen::Vector3d& d) const {
  const Eigen::Matrix3d R =
      (Eigen::AngleAxisd(pose.z(), Eigen::Vector3d::UnitZ()) * Eigen::AngleAxisd(-pitch, Eigen::Vector3d::UnitY()))
          .toRotationMatrix();
  return (R * d).normalized();
}

double RobotState::chassis_bottom_at(double body_x) const { return z + body_x * std::tan(pitch); }

std::vector<std::string> lidar_symbols(int wheel_pairs) {
  std::vector<std::string> out{"L_fl", "L_fr", "L_bl", "L_br", "L_lf", "L_lb", "L_rf", "L_rb"};
  for (int i = 1; i <= wheel_pairs; ++i) out.push_back("L_d" + std::to_string(i));
  for (const char* s : {"L_df", "L_db", "W_l", "W_r", "F_f", "F_b", "F_l", "F_r"}) out.emplace_back(s);
  return out;
}

double SensorFrame::at(const std::string& name) const {
  for (std::size_t j = 0; j < names.size(); ++j)
    if (names[j] == name) return values[j];
  throw std::out_of_range("no lidar named " + name);
}

bool SensorFrame::has(const std::string& name) const {
  return std::find(names.begin(), names.end(), name) != names.end();
}

namespace {

struct SupportPoint {
  SupportKind kind;
  int index;
  double bx;
  double ground;
  double height;  // chassis-bottom height this support would hold
};

std::vector<SupportPoint> support_points(const RobotState& s, const RobotGeometry& g, const TerraceProfile& p) {
  std::vector<SupportPoint> pts;
  for (int i = 0; i < g.wheel_pairs; ++i) {
    const double bx = g.pair_x[static_cast<std::size_t>(i)];
    const Eigen::Vector3d w = s.body_to_world({bx, 0.0, 0.0});
    const double G = p.ground(w.x(), w.y());
    pts.push_back({SupportKind::kWheel, i, bx, G, G + s.pair_leg(g, i)});
  }
  const auto dx = g.dummy_x();
  for (std::size_t j = 0; j < dx.size(); ++j) {
    const Eigen::Vector3d w = s.body_to_world({dx[j], 0.0, 0.0});
    const double G = p.ground(w.x(), w.y());
    pts.push_back({SupportKind::kDummy, static_cast<int>(j), dx[j], G, G + g.dummy_drop});
  }
  return pts;
}

const char* support_name(SupportKind k) { return k == SupportKind::kWheel ? "wheel pair" : "dummy pair"; }

}  // namespace

void settle_on_supports(RobotState& s, const RobotGeometry& g, const TerraceProfile& profile) {
  auto pts = support_points(s, g, profile);
  for (const auto& q : pts) {
    if (q.ground == std::numeric_limits<double>::infinity()) {
      throw CollisionError(std::string(support_name(q.kind)) + " " + std::to_string(q.index + 1) + " is inside a wall");
    }
  }
  std::vector<SupportPoint> fin;
  for (const auto& q : pts)
    if (std::isfinite(q.ground)) fin.push_back(q);
  std::sort(fin.begin(), fin.end(), [](const SupportPoint& a, const SupportPoint& b) { return a.bx < b.bx; });

  // upper hull, monotone chain
  std::vector<SupportPoint> hull;
  for (const auto& q : fin) {
    while (hull.size() >= 2) {
      const auto& A = hull[hull.size() - 2];
      const auto& B = hull.back();
      const double cr = (B.bx - A.bx) * (q.height - A.height) - (B.height - A.height) * (q.bx - A.bx);
      if (cr >= 0.0) hull.pop_back();
      else break;
    }
    if (!hull.empty() && std::abs(hull.back().bx - q.bx) < 1e-12) {
      if (q.height > hull.back().height) hull.back() = q;
      continue;
    }
    hull.push_back(q);
  }

  s.support_ground.clear();
  for (const auto& q : pts) s.support_ground.push_back(q.ground);
  s.contacts.clear();

  const double cx = g.com_x();
  if (hull.size() < 2 || cx < hull.front().bx || cx > hull.back().bx) {
    std::ostringstream msg;
    msg << "centre of mass at body x = " << cx << " has no support on both sides";
    throw TipOverError(msg.str());
  }
  std::size_t j = 0;
  while (j + 2 < hull.size() && hull[j + 1].bx < cx) ++j;
  const double slope = (hull[j + 1].height - hull[j].height) / (hull[j + 1].bx - hull[j].bx);
  const double z0 = hull[j].height - slope * hull[j].bx;
  s.z = z0;
  s.pitch = std::atan(slope);
  for (const auto& q : pts) {
    if (!std::isfinite(q.ground)) continue;
    if (std::abs(q.height - (z0 + slope * q.bx)) <= kContactTol) {
      Contact c;
      c.kind = q.kind;
      c.index = q.index;
      c.body_x = q.bx;
      c.world = s.body_to_world({q.bx, 0.0, 0.0});
      c.world.z() = q.ground;
      s.contacts.push_back(c);
    }
  }
  const Eigen::Vector3d cw = s.body_to_world({cx, 0.0, 0.0});
  s.on_step = profile.region(cw.x(), cw.y());
}

RobotState make_rest_state(const RobotGeometry& g, const TerraceProfile& profile, double x, double y, double yaw) {
  RobotState s;
  s.pose = {x, y, yaw};
  s.scissor_ext.assign(static_cast<std::size_t>(g.wheel_pairs), g.rest_extension());
  settle_on_supports(s, g, profile);
  return s;
}

SensorFrame sense(const RobotState& state, const RobotGeometry& g, const TerraceProfile& profile,
                  const NoiseSpec& noise, Rng* rng) {
  SensorFrame f;
  f.timestamp = state.t;
  f.names = lidar_symbols(g.wheel_pairs);
  f.values.reserve(f.names.size());

  auto cast_body = [&](const Eigen::Vector3d& b, const Eigen::Vector3d& d) {
    return raycast(state.body_to_world(b), state.body_dir_to_world(d), profile);
  };
  const double hz = g.lidar_mount_z;
  const double F = g.front_plane(), B = g.back_plane, w = g.d_W / 2, dl = g.d_L / 2;
  const Eigen::Vector3d fwd(1, 0, 0), back(-1, 0, 0), left(0, 1, 0), right(0, -1, 0), down(0, 0, -1);

  f.values.push_back(cast_body({F, w, hz}, fwd));
  f.values.push_back(cast_body({F, -w, hz}, fwd));
  f.values.push_back(cast_body({B, w, hz}, back));
  f.values.push_back(cast_body({B, -w, hz}, back));
  f.values.push_back(cast_body({dl, w, hz}, left));
  f.values.push_back(cast_body({-dl, w, hz}, left));
  f.values.push_back(cast_body({dl, -w, hz}, right));
  f.values.push_back(cast_body({-dl, -w, hz}, right));
  for (int i = 0; i < g.wheel_pairs; ++i) {
    const double bx = g.pair_x[static_cast<std::size_t>(i)];
    Eigen::Vector3d o = state.body_to_world({bx, 0.0, 0.0});
    o.z() = o.z() - state.pair_leg(g, i) + g.d_hb;  // bogie-mounted, d_hb above the wheel bottom
    f.values.push_back(raycast(o, {0, 0, -1}, profile));
  }
  f.values.push_back(cast_body({F, 0, 0}, down));
  f.values.push_back(cast_body({B, 0, 0}, down));
  const double zw = g.side_down_mount_z();
  const double cs = std::cos(g.side_down_angle), ss = std::sin(g.side_down_angle);
  f.values.push_back(cast_body({0, w, zw}, {0, cs, -ss}));
  f.values.push_back(cast_body({0, -w, zw}, {0, -cs, -ss}));
  const double zf = g.failsafe_mount_z();
  const double cf = std::cos(g.failsafe_angle), sf = std::sin(g.failsafe_angle);
  const double L = g.half_length;
  f.values.push_back(cast_body({L, 0, zf}, {cf, 0, -sf}));
  f.values.push_back(cast_body({-L, 0, zf}, {-cf, 0, -sf}));
  f.values.push_back(cast_body({0, w, zf}, {0, cf, -sf}));
  f.values.push_back(cast_body({0, -w, zf}, {0, -cf, -sf}));

  f.odom_left = state.enc_left;
  f.odom_right = state.enc_right;
  f.pitch_meas = state.pitch;
  f.yaw_rate_meas = state.omega;
  if (noise.enabled && rng != nullptr) {
    for (double& x : f.values) {
      if (std::isfinite(x)) x = std::max(0.0, x + noise.lidar_sigma * rng->normal());
    }
    if (noise.pitch_sigma > 0.0) f.pitch_meas += noise.pitch_sigma * rng->normal();
  }
  return f;
}

// ---------------------------------------------------------------- plant

void PlantParams::validate() const {
  if (!(k_a > 0.0 && damping >= 0.0 && inertia > 0.0)) throw std::invalid_argument("pitch plant constants out of range");
  if (!(sag >= 0.0)) throw std::invalid_argument("sag must be non-negative");
  if (!(yaw_lag >= 0.0)) throw std::invalid_argument("yaw lag must be non-negative");
  if (!(max_wheel_speed > 0.0 && max_actuator_rate > 0.0)) throw std::invalid_argument("plant limits must be positive");
}

bool Commands::is_zero() const {
  if (v_l != 0.0 || v_r != 0.0) return false;
  return std::all_of(rates.begin(), rates.end(), [](double r) { return r == 0.0; });
}

double disturbance_at(const std::vector<Disturbance>& ds, DisturbanceKind kind, double t) {
  double sum = 0.0;
  for (const auto& d : ds)
    if (d.kind == kind && d.active(t)) sum += d.magnitude;
  return sum;
}

RobotState step_kinematics(const RobotState& state, const Commands& cmd, double dt, const RobotGeometry& g,
                           const TerraceProfile& profile, const PlantParams& plant,
                           const std::vector<Disturbance>& ds, StepInfo* info) {
  if (!(dt > 0.0 && dt <= 0.05)) throw std::invalid_argument("time step must lie in (0, 0.05] s");
  if (static_cast<int>(cmd.rates.size()) != g.wheel_pairs) {
    throw std::invalid_argument("one actuator rate per wheel pair is required");
  }
  StepInfo local;
  StepInfo& inf = info ? *info : local;
  inf = StepInfo{};

  RobotState s = state;
  const double t = state.t;

  // scissor actuators
  for (int i = 0; i < g.wheel_pairs; ++i) {
    const double want = cmd.rates[static_cast<std::size_t>(i)];
    const double r = std::clamp(want, -plant.max_actuator_rate, plant.max_actuator_rate);
    if (std::abs(want - r) > 1e-12) inf.actuator_saturated = true;
    double& e = s.scissor_ext[static_cast<std::size_t>(i)];
    const double next = e + r * dt;
    e = std::clamp(next, 0.0, g.actuator_stroke);
    if (e != next) inf.actuator_saturated = true;
  }

  const double tau = disturbance_at(ds, DisturbanceKind::kPayloadTorque, t);
  double theta_dyn = state.pitch, rate_dyn = state.pitch_rate;
  if (plant.pitch_model == PitchModel::kDynamic) {
    auto& ef = s.scissor_ext.front();
    auto& eb = s.scissor_ext.back();
    ef -= 0.5 * plant.sag * tau * dt;
    eb += 0.5 * plant.sag * tau * dt;
    const double acc = (plant.k_a * (ef - eb) - tau - plant.damping * rate_dyn) / plant.inertia;
    rate_dyn += acc * dt;
    theta_dyn += rate_dyn * dt;
  }

  // drive
  const bool wheel_down = std::any_of(state.contacts.begin(), state.contacts.end(),
                                      [](const Contact& c) { return c.kind == SupportKind::kWheel; });
  double vl = std::clamp(cmd.v_l, -plant.max_wheel_speed, plant.max_wheel_speed);
  double vr = std::clamp(cmd.v_r, -plant.max_wheel_speed, plant.max_wheel_speed);
  if (!wheel_down) {
    if (vl != 0.0 || vr != 0.0) inf.stalled = true;
    vl = vr = 0.0;
  }
  s.enc_left = vl * dt;
  s.enc_right = vr * dt;
  const double slip = disturbance_at(ds, DisturbanceKind::kWheelSlip, t);
  if (slip > 0.0) vr *= 1.0 - slip;
  if (slip < 0.0) vl *= 1.0 + slip;
  const double v = 0.5 * (vl + vr);
  const double w_cmd = (vr - vl) / g.wheelbase;
  double w = w_cmd;
  if (plant.yaw_lag > 0.0) w = state.omega + (w_cmd - state.omega) * (1.0 - std::exp(-dt / plant.yaw_lag));

  const double yaw = state.pose.z();
  if (std::abs(w) < 1e-12) {
    s.pose.x() += v * dt * std::cos(yaw);
    s.pose.y() += v * dt * std::sin(yaw);
  } else {
    s.pose.x() += v / w * (std::sin(yaw + w * dt) - std::sin(yaw));
    s.pose.y() -= v / w * (std::cos(yaw + w * dt) - std::cos(yaw));
  }
  s.pose.z() = wrap_angle(yaw + w * dt);
  const double lat = disturbance_at(ds, DisturbanceKind::kLateralSlip, t);
  if (lat != 0.0) {
    s.pose.x() += -lat * std::sin(s.pose.z()) * dt;
    s.pose.y() += lat * std::cos(s.pose.z()) * dt;
  }
  s.v = v;
  s.omega = w;

  // supports: anything that rolled onto higher ground must not have met a lip
  // taller than max_lip relative to where the chassis was
  {
    const auto before = state.support_ground;
    RobotState probe = s;
    probe.z = state.z;
    probe.pitch = state.pitch;
    const auto pts = support_points(probe, g, profile);
    for (std::size_t k = 0; k < pts.size() && k < before.size(); ++k) {
      const auto& q = pts[k];
      if (!(q.ground > before[k] + 1e-9)) continue;
      const double line = state.chassis_bottom_at(q.bx);
      if (!std::isfinite(q.ground) || q.height > line + g.max_lip) {
        std::ostringstream msg;
        msg << support_name(q.kind) << ' ' << q.index + 1 << " ran into a riser (lip "
            << (q.height - line) << " m)";
        throw CollisionError(msg.str());
      }
    }
  }
  settle_on_supports(s, g, profile);
  for (double bx : {g.half_length, -g.half_length}) {
    const Eigen::Vector3d e = s.body_to_world({bx, 0.0, 0.0});
    if (profile.ground(e.x(), e.y()) > e.z() + 1e-9) {
      throw CollisionError(bx > 0 ? "chassis front ran into a riser" : "chassis back ran into a riser");
    }
  }
  if (plant.pitch_model == PitchModel::kDynamic) {
    s.pitch = theta_dyn;
    s.pitch_rate = rate_dyn;
  } else {
    s.pitch_rate = (s.pitch - state.pitch) / dt;
  }
  s.t = t + dt;
  return s;
}

}  // namespace stepfarm
