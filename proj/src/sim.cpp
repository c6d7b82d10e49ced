#include "stepfarm/sim.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <deque>
#include <memory>
#include <numbers>
#include <ostream>
#include <sstream>

namespace stepfarm {

namespace {

constexpr double kPi = std::numbers::pi;

double wrap(double a) { return std::remainder(a, 2.0 * kPi); }

std::string fmt(double x) { return format_number(x); }

struct Ctx {
  const Scenario& sc;
  const RobotGeometry& g;
  RobotState s;
  SensorFrame f;
  LocalizationState loc;
  SprayerState sprayer;
  std::vector<Task> armed;  // tools requested for the current pass
  std::vector<Event> events;
  std::vector<std::string> tick_events;
  std::string mode{"idle"};
  std::string phase;
  int pair{0};
  bool climbing{false};
  bool complete{false};
  bool width_watch{false};
  double cross_track{0.0};
  int tread{0};  // tread the mission believes it is on
  int climbs_up{0};
  int climbs_down{0};

  Ctx(const Scenario& scenario) : sc(scenario), g(scenario.geometry) {}

  Eigen::Vector3d pose() const { return sc.pose_source == PoseSource::kTruth ? s.pose : loc.ekf.x; }

  void event(const std::string& kind, const std::string& detail = {}) {
    events.push_back({s.t, kind, detail});
    tick_events.push_back(detail.empty() ? kind : kind + ":" + detail);
  }

  Commands zero() const { return Commands::zero(g.wheel_pairs); }

  Commands wheels(double v_l, double v_r) const {
    Commands c = zero();
    c.v_l = v_l;
    c.v_r = v_r;
    return c;
  }

  Commands turn(double v, double omega) const {
    return wheels(v - omega * g.wheelbase / 2, v + omega * g.wheelbase / 2);
  }

  void tools_off() {
    s.tools = ToolState{};
    sprayer = sprayer_select(SprayMode::kOff, 0.0, sprayer);
  }

  void apply_tools(double v) {
    ToolState t;
    SprayMode spray = SprayMode::kOff;
    for (Task k : armed) {
      switch (k) {
        case Task::kPlough: t.plough_down = true; break;
        case Task::kRoll: t.roller_down = true; break;
        case Task::kSow: t.seeder_rate = seed_rate(std::abs(v), sc.seeder).pulses; break;
        case Task::kWater: spray = SprayMode::kWater; break;
        case Task::kPesticide: spray = SprayMode::kPesticide; break;
        case Task::kNone: break;
      }
    }
    sprayer = sprayer_select(spray, sc.strategy.params.spray_duty, sprayer);
    t.water = sprayer.water_valve;
    t.pesticide = sprayer.pesticide_valve;
    t.pump_duty = sprayer.pump_duty;
    s.tools = t;
  }
};

// ---------------------------------------------------------------- actions

struct Action;
using ActionPtr = std::unique_ptr<Action>;
using ActionList = std::vector<ActionPtr>;

struct Action {
  virtual ~Action() = default;
  /// Command for this tick, or nullopt once finished.
  virtual std::optional<Commands> tick(Ctx& c) = 0;
};

/// Expands into other actions when reached, so it can plan from the pose at that time.
struct Deferred : Action {
  std::function<ActionList(Ctx&)> make;
  explicit Deferred(std::function<ActionList(Ctx&)> m) : make(std::move(m)) {}
  std::optional<Commands> tick(Ctx&) override { return std::nullopt; }
};

struct Instant : Action {
  std::function<void(Ctx&)> fn;
  explicit Instant(std::function<void(Ctx&)> f) : fn(std::move(f)) {}
  std::optional<Commands> tick(Ctx& c) override {
    fn(c);
    return std::nullopt;
  }
};

struct Pivot : Action {
  double target;
  explicit Pivot(double yaw) : target(yaw) {}
  std::optional<Commands> tick(Ctx& c) override {
    const double err = wrap(target - c.pose().z());
    if (std::abs(err) < 0.005) return std::nullopt;
    c.mode = "pivot";
    double omega = std::clamp(2.0 * err, -0.8, 0.8);
    if (std::abs(omega) < 0.05) omega = std::copysign(0.05, err);
    return c.turn(0.0, omega);
  }
};

/// Pure pursuit along a polyline until the projection reaches its end.
struct Follow : Action {
  std::vector<Eigen::Vector2d> pts;
  std::vector<double> cum;
  double speed;
  bool damped;
  bool row;
  int row_index;
  std::size_t seg{0};
  bool started{false};
  std::string label;

  Follow(std::vector<Eigen::Vector2d> p, double v, bool damping, bool is_row, int r, std::string name)
      : pts(std::move(p)), speed(v), damped(damping), row(is_row), row_index(r), label(std::move(name)) {
    cum.push_back(0.0);
    for (std::size_t i = 1; i < pts.size(); ++i) cum.push_back(cum.back() + (pts[i] - pts[i - 1]).norm());
  }

  struct Proj {
    std::size_t seg;
    double along;  // arc length
    double lateral;  // left positive
  };

  Proj project(const Eigen::Vector2d& p, std::size_t from) const {
    Proj best{from, cum[from], 0.0};
    double best_d = std::numeric_limits<double>::infinity();
    const std::size_t last = std::min(pts.size() - 1, from + 4);
    for (std::size_t i = from; i < last; ++i) {
      const Eigen::Vector2d a = pts[i], d = pts[i + 1] - pts[i];
      const double len = d.norm();
      if (len <= 0) continue;
      const Eigen::Vector2d u = d / len;
      const bool final_seg = i + 2 == pts.size();
      double t = (p - a).dot(u);
      t = final_seg ? std::max(t, 0.0) : std::clamp(t, 0.0, len);
      const Eigen::Vector2d q = a + t * u;
      const double dist = (p - q).norm();
      if (dist < best_d) {
        best_d = dist;
        const Eigen::Vector2d r = p - a;
        best = {i, cum[i] + t, u.x() * r.y() - u.y() * r.x()};
      }
    }
    return best;
  }

  Eigen::Vector2d point_at(double arc) const {
    if (arc >= cum.back()) {
      const Eigen::Vector2d u = (pts.back() - pts[pts.size() - 2]).normalized();
      return pts.back() + (arc - cum.back()) * u;
    }
    const auto it = std::upper_bound(cum.begin(), cum.end(), arc);
    const std::size_t i = static_cast<std::size_t>(std::max<std::ptrdiff_t>(it - cum.begin() - 1, 0));
    const double len = cum[i + 1] - cum[i];
    const double t = len > 0 ? (arc - cum[i]) / len : 0.0;
    return pts[i] + t * (pts[i + 1] - pts[i]);
  }

  std::optional<Commands> tick(Ctx& c) override {
    if (pts.size() < 2 || cum.back() <= 1e-9) return std::nullopt;
    const Eigen::Vector3d est = c.pose();
    const Proj pr = project(est.head<2>(), seg);
    seg = pr.seg;
    c.cross_track = project(c.s.pose.head<2>(), seg).lateral;
    if (pr.along >= cum.back() - 1e-3) {
      if (row) {
        c.event("row_end", std::to_string(row_index));
        c.tools_off();
      }
      return std::nullopt;
    }
    if (!started) {
      started = true;
      if (row) c.event("row_start", std::to_string(row_index));
    }
    c.mode = label;
    const double v = speed;
    const double ld = lookahead(v, c.sc.pursuit);
    const Eigen::Vector2d target = point_at(pr.along + ld);
    const double alpha = wrap(std::atan2(target.y() - est.y(), target.x() - est.x()) - est.z());
    double delta = damped ? pursuit_steer(alpha, v, 0.0, c.f.yaw_rate_meas, c.sc.pursuit)
                          : std::clamp(pursuit_steer_undamped(alpha, v, c.sc.pursuit), -c.sc.pursuit.delta_max,
                                       c.sc.pursuit.delta_max);
    const WheelSpeeds w = wheel_speeds_from_steer(v, delta, c.g.wheelbase);
    if (row) c.apply_tools(v);
    return c.wheels(w.v_l, w.v_r);
  }
};

/// Straight drive by odometry with a heading hold.
struct DriveStraight : Action {
  double distance;
  double speed;
  double travelled{0.0};
  double yaw0{std::numeric_limits<double>::quiet_NaN()};
  DriveStraight(double d, double v) : distance(d), speed(v) {}
  std::optional<Commands> tick(Ctx& c) override {
    if (std::isnan(yaw0)) yaw0 = c.pose().z();
    else travelled += 0.5 * (c.f.odom_left + c.f.odom_right);
    if (std::abs(travelled) >= std::abs(distance) - 1e-9) return std::nullopt;
    c.mode = "drive";
    const double v = std::copysign(std::min(speed, std::max(0.02, 2.0 * (std::abs(distance) - std::abs(travelled)))),
                                   distance);
    return c.turn(v, -2.0 * wrap(c.pose().z() - yaw0));
  }
};

/// Drive ahead until the mean forward reading drops to the standoff.
struct Approach : Action {
  double standoff;
  double speed;
  double yaw0{std::numeric_limits<double>::quiet_NaN()};
  Approach(double d, double v) : standoff(d), speed(v) {}
  std::optional<Commands> tick(Ctx& c) override {
    if (std::isnan(yaw0)) yaw0 = c.pose().z();
    const double m = 0.5 * (c.f.at("L_fl") + c.f.at("L_fr"));
    if (m <= standoff) return std::nullopt;
    c.mode = "approach";
    const double v = std::isfinite(m) ? std::min(speed, std::max(0.03, m - standoff)) : speed;
    return c.turn(v, -2.0 * wrap(c.pose().z() - yaw0));
  }
};

struct Climb : Action {
  ClimbDir dir;
  double rise;
  std::optional<ClimbState> st;
  Climb(ClimbDir d, double r) : dir(d), rise(r) {}
  std::optional<Commands> tick(Ctx& c) override {
    if (!st) {
      c.event("climb_request", std::string(dir == ClimbDir::kUp ? "up " : "down ") + fmt(rise));
      st = climb_begin(dir, rise, c.g);
    }
    ClimbOutput out = climb_tick(c.s, c.f, *st, c.g, c.sc.climb);
    for (const auto& ch : out.changes) {
      c.event("climb_phase", std::string(phase_name(ch.to)) + " " + std::to_string(ch.pair_to + 1));
    }
    c.mode = dir == ClimbDir::kUp ? "climb_up" : "climb_down";
    c.phase = phase_name(st->phase);
    const bool per_pair = st->phase == ClimbPhase::kLiftPair || st->phase == ClimbPhase::kAdvancePair ||
                          st->phase == ClimbPhase::kSettlePair || st->phase == ClimbPhase::kLowerPair;
    c.pair = per_pair ? st->pair + 1 : 0;
    c.climbing = st->phase != ClimbPhase::kAlign && !st->done();
    if (st->done()) {
      c.climbing = false;
      c.phase.clear();
      c.pair = 0;
      if (dir == ClimbDir::kUp) ++c.climbs_up;
      else ++c.climbs_down;
      c.event("climb_done", dir == ClimbDir::kUp ? "up" : "down");
      return std::nullopt;
    }
    return out.cmd;
  }
};

struct Hold : Action {
  std::optional<Commands> tick(Ctx& c) override {
    c.mode = "hold";
    return c.zero();
  }
};

struct DriveConst : Action {
  std::optional<Commands> tick(Ctx& c) override {
    c.mode = "drive";
    return c.wheels(c.sc.mission.v_l, c.sc.mission.v_r);
  }
};

struct PitchHold : Action {
  PitchPidState pid;
  std::vector<bool> front;
  explicit PitchHold(const Scenario& sc) : pid(sc.pitch) {
    if (!sc.mission.adaptive) pid.gamma_p = pid.gamma_i = pid.gamma_d = 0.0;
    const double com = sc.geometry.com_x();
    for (double x : sc.geometry.pair_x) front.push_back(x > com);
  }
  std::optional<Commands> tick(Ctx& c) override {
    c.mode = "pitch";
    const ActuatorRates r = pitch_tick(c.f.pitch_meas, 0.0, pid, c.sc.dt);
    Commands cmd = c.zero();
    for (std::size_t i = 0; i < front.size(); ++i) cmd.rates[i] = front[i] ? r.A_f : r.A_b;
    return cmd;
  }
};

// ---------------------------------------------------------------- queue

class Runner {
 public:
  std::deque<ActionPtr> queue;
  std::function<bool(Ctx&, std::deque<ActionPtr>&)> refill;  // false when nothing is left

  Commands tick(Ctx& c) {
    for (int guard = 0; guard < 1000; ++guard) {
      if (queue.empty()) {
        if (!refill || !refill(c, queue)) {
          c.complete = true;
          return c.zero();
        }
        continue;
      }
      Action* a = queue.front().get();
      if (auto* d = dynamic_cast<Deferred*>(a)) {
        ActionList made = d->make(c);
        queue.pop_front();
        for (auto it = made.rbegin(); it != made.rend(); ++it) queue.push_front(std::move(*it));
        continue;
      }
      if (auto cmd = a->tick(c)) return *cmd;
      queue.pop_front();
    }
    throw std::logic_error("mission made no progress in one tick");
  }
};

// ---------------------------------------------------------------- farm

Eigen::Vector2d row_point(const Ctx& c, int tread, double s, double q) {
  return {c.sc.terrace.riser_x(tread + 1, s) - q, s};
}

std::vector<double> prior_widths(const Ctx& c, int tread) {
  std::vector<double> w;
  const auto& m = c.sc.mission;
  const int n = std::max(2, static_cast<int>(std::ceil((m.s_end - m.s_start) / 0.1)) + 1);
  for (int i = 0; i < n; ++i) {
    const double s = m.s_start + (m.s_end - m.s_start) * i / (n - 1);
    w.push_back(c.sc.terrace.riser_x(tread + 1, s) - c.sc.terrace.riser_x(tread, s));
  }
  for (const auto& e : c.loc.width_estimates) {
    if (e.position >= m.s_start && e.position <= m.s_end) w.push_back(e.width);
  }
  return w;
}

ActionList goto_point(Ctx& c, const Eigen::Vector2d& target, double speed) {
  ActionList out;
  const Eigen::Vector3d p = c.pose();
  const Eigen::Vector2d d = target - p.head<2>();
  if (d.norm() < 0.05) return out;
  out.push_back(std::make_unique<Pivot>(std::atan2(d.y(), d.x())));
  out.push_back(std::make_unique<Follow>(std::vector<Eigen::Vector2d>{p.head<2>(), target}, speed, true, false, -1,
                                         "transit"));
  return out;
}

ActionList plan_traverse(Ctx& c, const MissionCommand& mc) {
  const auto& m = c.sc.mission;
  const Eigen::Vector3d p = c.pose();
  const double wall_x = c.sc.terrace.riser_x(c.tread + 1, p.y());
  const double q_now = wall_x - p.x();
  const double width = wall_x - c.sc.terrace.riser_x(c.tread, p.y());
  const bool from_edge = q_now > width / 2;
  const int entry = p.y() <= 0.5 * (m.s_start + m.s_end) ? 1 : -1;
  const RowPlan plan = plan_rows(m.n_crop_row, prior_widths(c, c.tread), m.s_start, m.s_end, c.sc.rows, from_edge,
                                 entry);
  c.event("traverse", "step " + std::to_string(c.loc.step_number) + " pass " + std::to_string(mc.pass) + " rows " +
                          std::to_string(plan.n_crop_row));

  ActionList out;
  std::size_t i = 0;
  while (i < plan.waypoints.size()) {
    const int r = plan.waypoints[i].row;
    std::vector<Eigen::Vector2d> pts;
    for (; i < plan.waypoints.size() && plan.waypoints[i].row == r; ++i) {
      pts.push_back(row_point(c, c.tread, plan.waypoints[i].s, plan.waypoints[i].q));
    }
    const double heading = pts.back().y() > pts.front().y() ? kPi / 2 : -kPi / 2;
    const Eigen::Vector2d first = pts.front();
    const double speed = m.speed;
    out.push_back(std::make_unique<Deferred>([first, speed](Ctx& cc) { return goto_point(cc, first, speed); }));
    out.push_back(std::make_unique<Pivot>(heading));
    out.push_back(std::make_unique<Follow>(std::move(pts), m.speed, true, true, r, "row"));
  }
  return out;
}

ActionList plan_climb(Ctx& c) {
  ActionList out;
  const int next = c.tread + 1;
  if (next >= c.sc.terrace.count()) throw PlanError("no tread above step " + std::to_string(c.loc.step_number));
  const double rise = c.sc.terrace.steps[static_cast<std::size_t>(next)].rise;
  out.push_back(std::make_unique<Pivot>(0.0));
  out.push_back(std::make_unique<Approach>(c.sc.mission.standoff, c.sc.mission.speed));
  out.push_back(std::make_unique<Climb>(ClimbDir::kUp, rise));
  out.push_back(std::make_unique<Instant>([](Ctx& cc) {
    ++cc.tread;
    ++cc.loc.step_number;
    cc.loc.width_estimates.clear();
    cc.event("step", std::to_string(cc.loc.step_number));
  }));
  out.push_back(std::make_unique<DriveStraight>(0.6, c.sc.mission.speed));
  return out;
}

void setup_farm(Ctx& c, Runner& run) {
  const int n_steps = c.sc.terrace.count() - c.tread;
  if (n_steps < 1) throw ScenarioError("farm start is not on a tread");
  auto sched = std::make_shared<Scheduler>(c.sc.strategy, n_steps);
  run.refill = [sched](Ctx& cc, std::deque<ActionPtr>& q) {
    if (sched->finished()) return false;
    const MissionCommand mc = sched->next();
    switch (mc.kind) {
      case CommandKind::kToolsOn: {
        cc.armed = mc.tools;
        std::string names;
        for (Task t : mc.tools) names += std::string(names.empty() ? "" : " ") + task_name(t);
        cc.event("tools_on", names);
        break;
      }
      case CommandKind::kToolsOff:
        cc.armed.clear();
        cc.tools_off();
        cc.event("tools_off");
        break;
      case CommandKind::kTraverse:
        q.push_back(std::make_unique<Deferred>([mc](Ctx& c2) { return plan_traverse(c2, mc); }));
        break;
      case CommandKind::kClimb:
        q.push_back(std::make_unique<Deferred>([](Ctx& c2) { return plan_climb(c2); }));
        break;
      case CommandKind::kDone:
        cc.event("mission_complete");
        return false;
    }
    return true;
  };
}

double climb_rise(const Scenario& sc, int region, ClimbDir dir) {
  if (sc.mission.expected_rise > 0) return sc.mission.expected_rise;
  const int riser = dir == ClimbDir::kUp ? region + 1 : std::max(region, 0);
  if (riser < 0 || riser >= sc.terrace.count()) throw ScenarioError("no riser ahead for the climb mission");
  return sc.terrace.steps[static_cast<std::size_t>(riser)].rise;
}

Eigen::Vector3d default_start(const Scenario& sc) {
  const auto& m = sc.mission;
  const auto& g = sc.geometry;
  switch (m.kind) {
    case MissionKind::kFarm: {
      const double q = sc.rows.wall_margin + g.d_W / 2 + (m.n_crop_row - 1) * sc.rows.row_spacing;
      return {sc.terrace.riser_x(1, m.s_start) - q, m.s_start, kPi / 2};
    }
    case MissionKind::kClimb:
      if (m.climb_dir == ClimbDir::kUp) return {sc.terrace.riser_x(0, 0.0) - g.front_plane() - 0.2, 0.0, 0.0};
      return {sc.terrace.riser_x(0, 0.0) + 0.6, 0.0, kPi};
    case MissionKind::kTrack: return {m.line_x + 0.5, 0.0, kPi / 2};
    case MissionKind::kPitch:
    case MissionKind::kDrive: {
      const double x0 = sc.terrace.riser_x(0, 0.0);
      return {x0 + std::min(0.5 * sc.terrace.tread_width(0, 0.0), 5.0), 0.0, kPi / 2};
    }
  }
  return Eigen::Vector3d::Zero();
}

int wall_riser(const Ctx& c) {
  const Eigen::Vector3d p = c.pose();
  const int r = c.sc.terrace.region(p.x(), p.y());
  return std::clamp(r + 1, 0, c.sc.terrace.count());
}

/// Wall-side pair is on the right heading +y, on the left heading -y.
std::optional<WallSide> wall_side_for(double yaw) {
  const double rel = wrap(yaw - kPi / 2);
  if (std::abs(rel) < deg2rad(20.0)) return WallSide::kRight;
  if (std::abs(wrap(rel + kPi)) < deg2rad(20.0)) return WallSide::kLeft;
  return std::nullopt;
}

}  // namespace

const char* outcome_name(Outcome o) {
  switch (o) {
    case Outcome::kComplete: return "complete";
    case Outcome::kEStop: return "estop";
    case Outcome::kAborted: return "aborted";
    case Outcome::kTipOver: return "tipover";
  }
  return "?";
}

SimResult run_scenario(const Scenario& sc, const TraceObserver& observer) {
  sc.validate();
  const auto& g = sc.geometry;
  const auto& m = sc.mission;
  Ctx c(sc);
  const Eigen::Vector3d start = m.start_given ? m.start : default_start(sc);
  c.s = make_rest_state(g, sc.terrace, start.x(), start.y(), start.z());
  c.loc.ekf.x = c.s.pose;
  c.tread = std::max(0, sc.terrace.region(start.x(), start.y()));
  Rng rng(sc.seed);

  Runner run;
  switch (m.kind) {
    case MissionKind::kFarm: setup_farm(c, run); break;
    case MissionKind::kClimb: {
      const int region = sc.terrace.region(start.x(), start.y());
      const double rise = climb_rise(sc, region, m.climb_dir);
      run.queue.push_back(std::make_unique<Climb>(m.climb_dir, rise));
      if (m.round_trip) {
        const ClimbDir back = m.climb_dir == ClimbDir::kUp ? ClimbDir::kDown : ClimbDir::kUp;
        run.queue.push_back(std::make_unique<DriveStraight>(0.6, 0.1));
        run.queue.push_back(std::make_unique<Deferred>([](Ctx& cc) {
          ActionList l;
          l.push_back(std::make_unique<Pivot>(wrap(cc.pose().z() + kPi)));
          return l;
        }));
        if (back == ClimbDir::kUp) run.queue.push_back(std::make_unique<Approach>(m.standoff, 0.1));
        run.queue.push_back(std::make_unique<Climb>(back, rise));
      }
      break;
    }
    case MissionKind::kTrack: {
      std::vector<Eigen::Vector2d> line{{m.line_x, start.y()}, {m.line_x, start.y() + 1e4}};
      run.queue.push_back(std::make_unique<Follow>(std::move(line), m.speed, m.yaw_damping, false, -1, "track"));
      break;
    }
    case MissionKind::kPitch: run.queue.push_back(std::make_unique<PitchHold>(sc)); break;
    case MissionKind::kDrive: run.queue.push_back(std::make_unique<DriveConst>()); break;
  }
  const bool open_ended = m.kind == MissionKind::kTrack || m.kind == MissionKind::kPitch || m.kind == MissionKind::kDrive;

  FailsafeStatus fs = make_failsafe(g);
  int monitor_side = -1;  // WallSide as int, -1 when idle
  WidthMonitor monitor(WallSide::kRight, g);

  SimResult res;
  res.outcome = Outcome::kComplete;
  const long max_ticks = static_cast<long>(std::ceil(sc.duration / sc.dt - 1e-9));
  c.event("start", std::string(mission_kind_name(m.kind)) + " " + sc.name);

  bool stop = false;
  for (long tick = 0; !stop; ++tick) {
    c.tick_events.clear();
    if (tick >= max_ticks) {
      if (open_ended) {
        c.event("end", "duration");
      } else {
        res.outcome = Outcome::kAborted;
        res.message = "mission did not finish within the scenario duration";
        c.event("abort", "timeout");
      }
      break;
    }

    c.f = sense(c.s, g, sc.terrace, sc.noise, sc.noise.enabled ? &rng : nullptr);
    ekf_predict(c.loc.ekf, c.f.odom_left, c.f.odom_right, g.wheelbase, sc.ekf);

    const auto side = c.climbing || c.mode == "pivot" ? std::nullopt : wall_side_for(c.pose().z());
    if (side) {
      const double lf = c.f.at(*side == WallSide::kRight ? "L_rf" : "L_lf");
      const double lb = c.f.at(*side == WallSide::kRight ? "L_rb" : "L_lb");
      if (std::isfinite(lf) && std::isfinite(lb)) {
        const int riser = wall_riser(c);
        const WallLine wall = WallLine::at_x(sc.terrace.riser_x(riser, c.pose().y()), *side);
        const WallMeasurement z = wall_measurement(lf, lb, g);
        ekf_update_wall(c.loc.ekf, z, wall, sc.ekf);
        if (*side == WallSide::kRight) c.loc.dist_right = z.dist - g.d_W / 2;
        else c.loc.dist_left = z.dist - g.d_W / 2;
      }
      if (static_cast<int>(*side) != monitor_side) {
        monitor = WidthMonitor(*side, g);
        monitor_side = static_cast<int>(*side);
      }
      if (auto w = monitor.update(c.f, c.pose().y())) {
        c.loc.width_estimates.push_back(*w);
        res.widths.push_back(*w);
        c.event("width", fmt(w->width) + " at " + fmt(w->position));
      }
    } else {
      monitor_side = -1;
    }

    c.cross_track = 0.0;
    Commands cmd;
    try {
      cmd = run.tick(c);
    } catch (const ClimbError& e) {
      res.outcome = Outcome::kAborted;
      res.message = std::string("climb: ") + e.what();
      c.event("abort", res.message);
      cmd = c.zero();
      stop = true;
    } catch (const PlanError& e) {
      res.outcome = Outcome::kAborted;
      res.message = std::string("plan: ") + e.what();
      c.event("abort", res.message);
      cmd = c.zero();
      stop = true;
    }
    if (c.complete && !stop) {
      c.event("complete");
      stop = true;
      cmd = c.zero();
    }

    fs = failsafe_monitor(c.f, fs, g, c.climbing);
    if (fs.triggered) {
      if (res.outcome == Outcome::kComplete && !stop) {
        res.outcome = Outcome::kEStop;
        res.message = "fail-safe tripped by " + fs.triggered_by;
        res.failsafe_by = fs.triggered_by;
        c.event("failsafe", fs.triggered_by);
        c.complete = false;
      }
      cmd = c.zero();
      stop = true;
    }

    const Stability stab = stability_check(c.s, g);
    res.min_margin = std::min(res.min_margin, stab.margin);

    if (observer) {
      TraceRow row;
      row.t = c.s.t;
      row.state = &c.s;
      row.cmd = &cmd;
      row.frame = &c.f;
      row.est = c.loc.ekf.x;
      row.cross_track = c.cross_track;
      row.margin = stab.margin;
      row.mode = c.mode;
      row.phase = c.phase;
      row.pair = c.pair;
      row.failsafe = fs.triggered;
      row.events = c.tick_events;
      observer(row);
    }

    try {
      c.s = step_kinematics(c.s, cmd, sc.dt, g, sc.terrace, sc.plant, sc.disturbances);
      c.s.t = static_cast<double>(tick + 1) * sc.dt;  // no drift from repeated addition
    } catch (const TipOverError& e) {
      res.outcome = Outcome::kTipOver;
      res.message = e.what();
      c.event("tipover", e.what());
      stop = true;
    } catch (const CollisionError& e) {
      res.outcome = Outcome::kAborted;
      res.message = std::string("collision: ") + e.what();
      c.event("abort", res.message);
      stop = true;
    }
    res.forward_travel += 0.5 * (c.s.enc_left + c.s.enc_right);
    ++res.ticks;
  }

  res.t_end = c.s.t;
  res.final_state = c.s;
  res.climbs_up = c.climbs_up;
  res.climbs_down = c.climbs_down;
  res.events = std::move(c.events);
  return res;
}

// ---------------------------------------------------------------- CSV

std::string format_number(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  if (x == 0.0) return "0";
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, r.ptr);
}

std::vector<std::string> TraceCsvWriter::header(int n) {
  std::vector<std::string> h{"t", "x", "y", "yaw", "z", "pitch", "pitch_rate"};
  for (int i = 1; i <= n; ++i) h.push_back("ext_" + std::to_string(i));
  h.insert(h.end(), {"v_l", "v_r"});
  for (int i = 1; i <= n; ++i) h.push_back("rate_" + std::to_string(i));
  for (const char* s : {"est_x", "est_y", "est_yaw", "cross_track", "margin", "mode", "phase", "pair", "failsafe",
                        "water", "pesticide", "pump_duty", "seeder_rate", "plough", "roller"}) {
    h.emplace_back(s);
  }
  for (const auto& s : lidar_symbols(n)) h.push_back(s);
  h.emplace_back("events");
  return h;
}

TraceCsvWriter::TraceCsvWriter(std::ostream& os, int wheel_pairs) : os_(os), pairs_(wheel_pairs) {
  const auto h = header(pairs_);
  for (std::size_t i = 0; i < h.size(); ++i) os_ << (i ? "," : "") << h[i];
  os_ << '\n';
}

void TraceCsvWriter::operator()(const TraceRow& r) {
  const RobotState& s = *r.state;
  std::ostringstream line;
  auto num = [&](double x) { line << ',' << format_number(x); };
  line << format_number(r.t);
  num(s.pose.x());
  num(s.pose.y());
  num(s.pose.z());
  num(s.z);
  num(s.pitch);
  num(s.pitch_rate);
  for (int i = 0; i < pairs_; ++i) num(s.scissor_ext[static_cast<std::size_t>(i)]);
  num(r.cmd->v_l);
  num(r.cmd->v_r);
  for (int i = 0; i < pairs_; ++i) {
    num(static_cast<std::size_t>(i) < r.cmd->rates.size() ? r.cmd->rates[static_cast<std::size_t>(i)] : 0.0);
  }
  num(r.est.x());
  num(r.est.y());
  num(r.est.z());
  num(r.cross_track);
  num(r.margin);
  line << ',' << r.mode << ',' << r.phase << ',' << r.pair << ',' << (r.failsafe ? 1 : 0);
  line << ',' << (s.tools.water ? 1 : 0) << ',' << (s.tools.pesticide ? 1 : 0);
  num(s.tools.pump_duty);
  num(s.tools.seeder_rate);
  line << ',' << (s.tools.plough_down ? 1 : 0) << ',' << (s.tools.roller_down ? 1 : 0);
  for (double v : r.frame->values) num(v);
  line << ',';
  for (std::size_t i = 0; i < r.events.size(); ++i) {
    std::string e = r.events[i];
    std::replace(e.begin(), e.end(), ',', ' ');
    line << (i ? ";" : "") << e;
  }
  os_ << line.str() << '\n';
}

void write_events_csv(std::ostream& os, const std::vector<Event>& events) {
  os << "t,kind,detail\n";
  for (const auto& e : events) {
    std::string d = e.detail;
    if (d.find_first_of(",\"") != std::string::npos) {
      std::string q = "\"";
      for (char ch : d) q += ch == '"' ? std::string("\"\"") : std::string(1, ch);
      d = q + "\"";
    }
    os << format_number(e.t) << ',' << e.kind << ',' << d << '\n';
  }
}

}  // namespace stepfarm
