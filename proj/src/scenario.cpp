#include <fstream>
#include <set>

#include "stepfarm/sim.hpp"

namespace stepfarm {

using nlohmann::json;

namespace {

void check_keys(const json& j, const char* where, std::initializer_list<const char*> allowed) {
  if (!j.is_object()) throw ScenarioError(std::string(where) + " must be an object");
  std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& [k, v] : j.items()) {
    if (!ok.count(k)) throw ScenarioError(std::string(where) + ": unknown key '" + k + "'");
  }
}

template <typename T>
void get(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

void get_deg(const json& j, const char* key, double& out_rad) {
  if (j.contains(key)) out_rad = deg2rad(j.at(key).get<double>());
}

PiecewiseLinear parse_pl(const json& j, const char* where) {
  check_keys(j, where, {"s", "v"});
  PiecewiseLinear f;
  f.s = j.at("s").get<std::vector<double>>();
  f.v = j.at("v").get<std::vector<double>>();
  if (f.s.empty()) throw ScenarioError(std::string(where) + ": needs at least one breakpoint");
  return f;
}

TerraceProfile parse_terrace(const json& j) {
  check_keys(j, "terrace", {"steps", "uniform", "lateral_width", "wall_side", "x0"});
  TerraceProfile p;
  p.steps.clear();
  if (j.contains("uniform") == j.contains("steps")) {
    throw ScenarioError("terrace: give exactly one of 'steps' or 'uniform'");
  }
  if (j.contains("uniform")) {
    const auto& u = j.at("uniform");
    check_keys(u, "terrace.uniform", {"count", "rise", "run"});
    p = TerraceProfile::uniform(u.at("count").get<int>(), u.at("rise").get<double>(), u.at("run").get<double>());
  } else {
    for (const auto& sj : j.at("steps")) {
      check_keys(sj, "terrace.steps[]", {"rise", "run", "missing", "width"});
      TerraceStep st;
      get(sj, "rise", st.rise);
      get(sj, "run", st.run);
      get(sj, "missing", st.missing);
      if (sj.contains("width")) st.width = parse_pl(sj.at("width"), "terrace.steps[].width");
      p.steps.push_back(st);
    }
  }
  if (j.contains("lateral_width")) p.lateral_width = parse_pl(j.at("lateral_width"), "terrace.lateral_width");
  if (j.contains("wall_side")) {
    const auto w = j.at("wall_side").get<std::string>();
    if (w == "left") p.wall_side = WallSide::kLeft;
    else if (w == "right") p.wall_side = WallSide::kRight;
    else throw ScenarioError("terrace.wall_side must be 'left' or 'right'");
  }
  get(j, "x0", p.x0);
  return p;
}

void parse_geometry(const json& j, RobotGeometry& g) {
  check_keys(j, "geometry",
             {"d_W", "d_L", "d_hb", "d_of", "d_ob", "L_db_mount", "wheel_pairs", "dummy_pairs", "wheelbase", "mass",
              "pair_x", "inner_dummy_x", "half_length", "back_plane", "leg_closed", "dummy_drop", "lidar_mount_z",
              "failsafe_angle_deg", "side_down_angle_deg", "bogie_mass_fraction", "max_lip", "max_climb",
              "actuator_stroke"});
  get(j, "d_W", g.d_W);
  get(j, "d_L", g.d_L);
  get(j, "d_hb", g.d_hb);
  get(j, "d_of", g.d_of);
  get(j, "d_ob", g.d_ob);
  get(j, "L_db_mount", g.L_db_mount);
  get(j, "wheel_pairs", g.wheel_pairs);
  get(j, "dummy_pairs", g.dummy_pairs);
  get(j, "wheelbase", g.wheelbase);
  get(j, "mass", g.mass);
  get(j, "pair_x", g.pair_x);
  get(j, "inner_dummy_x", g.inner_dummy_x);
  get(j, "half_length", g.half_length);
  get(j, "back_plane", g.back_plane);
  get(j, "leg_closed", g.leg_closed);
  get(j, "dummy_drop", g.dummy_drop);
  get(j, "lidar_mount_z", g.lidar_mount_z);
  get_deg(j, "failsafe_angle_deg", g.failsafe_angle);
  get_deg(j, "side_down_angle_deg", g.side_down_angle);
  get(j, "bogie_mass_fraction", g.bogie_mass_fraction);
  get(j, "max_lip", g.max_lip);
  get(j, "max_climb", g.max_climb);
  get(j, "actuator_stroke", g.actuator_stroke);
}

void parse_plant(const json& j, PlantParams& p) {
  check_keys(j, "plant",
             {"pitch_model", "k_a", "damping", "inertia", "sag", "yaw_lag", "max_wheel_speed", "max_actuator_rate"});
  if (j.contains("pitch_model")) {
    const auto m = j.at("pitch_model").get<std::string>();
    if (m == "support") p.pitch_model = PitchModel::kSupport;
    else if (m == "dynamic") p.pitch_model = PitchModel::kDynamic;
    else throw ScenarioError("plant.pitch_model must be 'support' or 'dynamic'");
  }
  get(j, "k_a", p.k_a);
  get(j, "damping", p.damping);
  get(j, "inertia", p.inertia);
  get(j, "sag", p.sag);
  get(j, "yaw_lag", p.yaw_lag);
  get(j, "max_wheel_speed", p.max_wheel_speed);
  get(j, "max_actuator_rate", p.max_actuator_rate);
}

Disturbance parse_disturbance(const json& j) {
  check_keys(j, "disturbances[]", {"kind", "magnitude", "t_start", "t_end"});
  Disturbance d;
  const auto k = j.at("kind").get<std::string>();
  if (k == "payload_torque") d.kind = DisturbanceKind::kPayloadTorque;
  else if (k == "lateral_slip") d.kind = DisturbanceKind::kLateralSlip;
  else if (k == "wheel_slip") d.kind = DisturbanceKind::kWheelSlip;
  else throw ScenarioError("unknown disturbance kind '" + k + "'");
  d.magnitude = j.at("magnitude").get<double>();
  get(j, "t_start", d.t_start);
  if (j.contains("t_end") && !j.at("t_end").is_null()) d.t_end = j.at("t_end").get<double>();
  return d;
}

void parse_gains(const json& j, Scenario& sc) {
  check_keys(j, "gains", {"pitch", "pursuit", "climb", "ekf"});
  if (j.contains("pitch")) {
    const auto& p = j.at("pitch");
    check_keys(p, "gains.pitch",
               {"k_p", "k_i", "k_d", "gamma_p", "gamma_i", "gamma_d", "k_p_cap", "k_i_cap", "k_d_cap", "integral_max",
                "tau_filter", "c1", "c2", "rate_limit"});
    auto& s = sc.pitch;
    get(p, "k_p", s.k_p);
    get(p, "k_i", s.k_i);
    get(p, "k_d", s.k_d);
    get(p, "gamma_p", s.gamma_p);
    get(p, "gamma_i", s.gamma_i);
    get(p, "gamma_d", s.gamma_d);
    get(p, "k_p_cap", s.k_p_cap);
    get(p, "k_i_cap", s.k_i_cap);
    get(p, "k_d_cap", s.k_d_cap);
    get(p, "integral_max", s.integral_max);
    get(p, "tau_filter", s.tau_filter);
    get(p, "c1", s.c1);
    get(p, "c2", s.c2);
    get(p, "rate_limit", s.rate_limit);
  }
  if (j.contains("pursuit")) {
    const auto& p = j.at("pursuit");
    check_keys(p, "gains.pursuit", {"l0", "beta", "k_dyaw", "delta_max_deg"});
    get(p, "l0", sc.pursuit.l0);
    get(p, "beta", sc.pursuit.beta);
    get(p, "k_dyaw", sc.pursuit.k_dyaw);
    get_deg(p, "delta_max_deg", sc.pursuit.delta_max);
  }
  if (j.contains("climb")) {
    const auto& p = j.at("climb");
    check_keys(p, "gains.climb",
               {"drive_speed", "lift_rate", "pair_rate", "jump_threshold", "align_tol", "align_gain", "align_timeout",
                "contact_tol", "level_tol", "level_rate", "back_off", "lidar_disagree", "track_tol", "timeout"});
    auto& c = sc.climb;
    get(p, "drive_speed", c.drive_speed);
    get(p, "lift_rate", c.lift_rate);
    get(p, "pair_rate", c.pair_rate);
    get(p, "jump_threshold", c.jump_threshold);
    get(p, "align_tol", c.align_tol);
    get(p, "align_gain", c.align_gain);
    get(p, "align_timeout", c.align_timeout);
    get(p, "contact_tol", c.contact_tol);
    get(p, "level_tol", c.level_tol);
    get(p, "level_rate", c.level_rate);
    get(p, "back_off", c.back_off);
    get(p, "lidar_disagree", c.lidar_disagree);
    get(p, "track_tol", c.track_tol);
    get(p, "timeout", c.timeout);
  }
  if (j.contains("ekf")) {
    const auto& p = j.at("ekf");
    check_keys(p, "gains.ekf", {"odom_sigma2", "sigma_phi", "sigma_dist", "gate"});
    get(p, "odom_sigma2", sc.ekf.odom_sigma2);
    get(p, "sigma_phi", sc.ekf.sigma_phi);
    get(p, "sigma_dist", sc.ekf.sigma_dist);
    get(p, "gate", sc.ekf.gate);
  }
}

void parse_mission(const json& j, MissionSpec& m) {
  check_keys(j, "mission",
             {"kind", "start", "speed", "standoff", "s_start", "s_end", "n_crop_row", "climb_dir", "round_trip",
              "expected_rise", "line_x", "yaw_damping", "adaptive", "v_l", "v_r"});
  if (j.contains("kind")) {
    const auto k = j.at("kind").get<std::string>();
    bool found = false;
    for (MissionKind mk :
         {MissionKind::kFarm, MissionKind::kClimb, MissionKind::kTrack, MissionKind::kPitch, MissionKind::kDrive}) {
      if (k == mission_kind_name(mk)) {
        m.kind = mk;
        found = true;
      }
    }
    if (!found) throw ScenarioError("unknown mission kind '" + k + "'");
  }
  if (j.contains("start")) {
    const auto& s = j.at("start");
    check_keys(s, "mission.start", {"x", "y", "yaw_deg"});
    m.start = {s.at("x").get<double>(), s.at("y").get<double>(), deg2rad(s.value("yaw_deg", 0.0))};
    m.start_given = true;
  }
  get(j, "speed", m.speed);
  get(j, "standoff", m.standoff);
  get(j, "s_start", m.s_start);
  get(j, "s_end", m.s_end);
  get(j, "n_crop_row", m.n_crop_row);
  if (j.contains("climb_dir")) {
    const auto d = j.at("climb_dir").get<std::string>();
    if (d == "up") m.climb_dir = ClimbDir::kUp;
    else if (d == "down") m.climb_dir = ClimbDir::kDown;
    else throw ScenarioError("mission.climb_dir must be 'up' or 'down'");
  }
  get(j, "round_trip", m.round_trip);
  get(j, "expected_rise", m.expected_rise);
  get(j, "line_x", m.line_x);
  get(j, "yaw_damping", m.yaw_damping);
  get(j, "adaptive", m.adaptive);
  get(j, "v_l", m.v_l);
  get(j, "v_r", m.v_r);
}

}  // namespace

const char* mission_kind_name(MissionKind k) {
  switch (k) {
    case MissionKind::kFarm: return "farm";
    case MissionKind::kClimb: return "climb";
    case MissionKind::kTrack: return "track";
    case MissionKind::kPitch: return "pitch";
    case MissionKind::kDrive: return "drive";
  }
  return "?";
}

void Scenario::validate() const {
  try {
    if (!(dt > 0.0 && dt <= 0.05)) throw ScenarioError("dt must lie in (0, 0.05] s");
    if (!(duration > 0.0) || !std::isfinite(duration)) throw ScenarioError("duration must be positive");
    geometry.validate();
    terrace.validate(geometry.length());
    plant.validate();
    pitch.validate();
    climb.validate();
    ekf.validate();
    rows.validate();
    if (!(noise.lidar_sigma >= 0 && noise.pitch_sigma >= 0)) throw ScenarioError("noise sigmas must be non-negative");
    for (const auto& d : disturbances) {
      if (!std::isfinite(d.magnitude) || !std::isfinite(d.t_start) || !(d.t_end >= d.t_start)) {
        throw ScenarioError("disturbance window or magnitude invalid");
      }
    }
    if (!(pursuit.l0 > 0 && pursuit.beta >= 0 && pursuit.k_dyaw >= 0 && pursuit.delta_max > 0)) {
      throw ScenarioError("pursuit gains out of range");
    }
    if (!(seeder.n_t > 0 && seeder.d_sep > 0 && seeder.alpha_step > 0)) throw ScenarioError("seeder config invalid");
    if (!(mission.speed > 0 && mission.speed <= plant.max_wheel_speed)) {
      throw ScenarioError("mission speed must lie in (0, max wheel speed]");
    }
    if (mission.kind == MissionKind::kFarm) {
      if (mission.n_crop_row < 1) throw ScenarioError("n_crop_row must be at least 1");
      if (!(mission.s_end > mission.s_start)) throw ScenarioError("row span must be positive");
    }
    if (!(mission.standoff > 0)) throw ScenarioError("standoff must be positive");
  } catch (const ScenarioError&) {
    throw;
  } catch (const std::exception& e) {
    throw ScenarioError(e.what());
  }
}

Scenario scenario_from_json(const json& j) {
  Scenario sc;
  try {
    check_keys(j, "scenario",
               {"name", "dt", "duration", "seed", "pose_source", "terrace", "geometry", "noise", "plant",
                "disturbances", "gains", "rows", "seeder", "strategy", "mission"});
    get(j, "name", sc.name);
    get(j, "dt", sc.dt);
    get(j, "duration", sc.duration);
    get(j, "seed", sc.seed);
    if (j.contains("pose_source")) {
      const auto s = j.at("pose_source").get<std::string>();
      if (s == "ekf") sc.pose_source = PoseSource::kEkf;
      else if (s == "truth") sc.pose_source = PoseSource::kTruth;
      else throw ScenarioError("pose_source must be 'ekf' or 'truth'");
    }
    if (j.contains("terrace")) sc.terrace = parse_terrace(j.at("terrace"));
    if (j.contains("geometry")) parse_geometry(j.at("geometry"), sc.geometry);
    if (j.contains("noise")) {
      const auto& n = j.at("noise");
      check_keys(n, "noise", {"enabled", "lidar_sigma", "pitch_sigma"});
      get(n, "enabled", sc.noise.enabled);
      get(n, "lidar_sigma", sc.noise.lidar_sigma);
      get(n, "pitch_sigma", sc.noise.pitch_sigma);
    }
    if (j.contains("plant")) parse_plant(j.at("plant"), sc.plant);
    if (j.contains("disturbances")) {
      for (const auto& d : j.at("disturbances")) sc.disturbances.push_back(parse_disturbance(d));
    }
    if (j.contains("gains")) parse_gains(j.at("gains"), sc);
    if (j.contains("rows")) {
      const auto& r = j.at("rows");
      check_keys(r, "rows", {"row_spacing", "wall_margin", "edge_margin", "lookahead"});
      get(r, "row_spacing", sc.rows.row_spacing);
      get(r, "wall_margin", sc.rows.wall_margin);
      get(r, "edge_margin", sc.rows.edge_margin);
      get(r, "lookahead", sc.rows.lookahead);
    }
    if (j.contains("seeder")) {
      const auto& s = j.at("seeder");
      check_keys(s, "seeder", {"n_t", "d_sep", "alpha_step_deg"});
      get(s, "n_t", sc.seeder.n_t);
      get(s, "d_sep", sc.seeder.d_sep);
      get_deg(s, "alpha_step_deg", sc.seeder.alpha_step);
    }
    if (j.contains("strategy")) {
      const auto& s = j.at("strategy");
      check_keys(s, "strategy", {"steps", "seed_spacing", "spray_duty"});
      if (s.contains("steps")) {
        for (const auto& step : s.at("steps")) {
          std::vector<Task> tasks;
          for (const auto& t : step) tasks.push_back(parse_task(t.get<std::string>()));
          sc.strategy.steps.push_back(tasks);
        }
      }
      get(s, "seed_spacing", sc.strategy.params.seed_spacing);
      get(s, "spray_duty", sc.strategy.params.spray_duty);
    }
    if (j.contains("mission")) parse_mission(j.at("mission"), sc.mission);
  } catch (const ScenarioError&) {
    throw;
  } catch (const std::exception& e) {
    throw ScenarioError(std::string("scenario: ") + e.what());
  }
  sc.seeder.d_sep = sc.strategy.params.seed_spacing;
  sc.pursuit.wheelbase = sc.geometry.wheelbase;
  sc.rows.robot_width = sc.geometry.d_W;
  sc.validate();
  return sc;
}

Scenario load_scenario(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ScenarioError("cannot open scenario " + path);
  json j;
  try {
    j = json::parse(in);
  } catch (const std::exception& e) {
    throw ScenarioError("scenario " + path + " is not valid JSON: " + e.what());
  }
  auto sc = scenario_from_json(j);
  sc.source_path = path;
  return sc;
}

}  // namespace stepfarm
