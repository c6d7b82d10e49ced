#include "stepfarm/climb.hpp"

#include <algorithm>
#include <cmath>

namespace stepfarm {

const char* phase_name(ClimbPhase p) {
  switch (p) {
    case ClimbPhase::kAlign: return "Align";
    case ClimbPhase::kRaise: return "Raise";
    case ClimbPhase::kLiftAll: return "LiftAll";
    case ClimbPhase::kAdvanceOverEdge: return "AdvanceOverEdge";
    case ClimbPhase::kLiftPair: return "LiftPair";
    case ClimbPhase::kApproach: return "Approach";
    case ClimbPhase::kBackOff: return "BackOff";
    case ClimbPhase::kLowerPair: return "LowerPair";
    case ClimbPhase::kAdvanceFinal: return "AdvanceFinal";
    case ClimbPhase::kLowerAll: return "LowerAll";
    case ClimbPhase::kAdvancePair: return "AdvancePair";
    case ClimbPhase::kSettlePair: return "SettlePair";
    case ClimbPhase::kDone: return "Done";
  }
  return "?";
}

void ClimbParams::validate() const {
  if (!(drive_speed > 0 && lift_rate > 0 && pair_rate > 0 && level_rate > 0)) {
    throw std::invalid_argument("climb speeds must be positive");
  }
  if (!(jump_threshold > 0 && gate_margin > 0 && align_tol > 0 && contact_tol > 0 && level_tol > 0)) {
    throw std::invalid_argument("climb tolerances must be positive");
  }
  if (!(stop_tol >= 0)) throw std::invalid_argument("stop tolerance must be non-negative");
  if (median_window < 1 || gate_hold < 1) throw std::invalid_argument("median window and gate hold must be at least 1");
  if (!(align_timeout > 0 && timeout > 0 && back_off >= 0 && track_tol > 0)) throw std::invalid_argument("climb timing out of range");
}

bool detect_sudden_change(double prev, double curr, double threshold) {
  if (std::isnan(prev) || std::isnan(curr)) return false;
  if (std::isinf(prev) || std::isinf(curr)) return std::isinf(prev) != std::isinf(curr);
  return std::abs(curr - prev) > threshold;
}

bool detect_sudden_change(const std::vector<double>& series, double threshold) {
  if (series.size() < 2) throw std::invalid_argument("sudden-change detection needs two samples");
  return detect_sudden_change(series[series.size() - 2], series.back(), threshold);
}

AlignCommand yaw_align(double a, double b, double baseline, double sign, const ClimbParams& p) {
  AlignCommand out;
  if (!std::isfinite(a) || !std::isfinite(b)) return out;
  const double d = a - b;
  if (std::abs(d) < p.align_tol) {
    out.aligned = true;
    return out;
  }
  out.omega = -p.align_gain * sign * std::atan(d / baseline);
  return out;
}

ClimbState climb_begin(ClimbDir dir, double expected_rise, const RobotGeometry& g) {
  if (!(expected_rise > 0.0)) throw std::invalid_argument("step rise must be positive");
  if (expected_rise > g.climb_cap()) {
    throw ClimbError(ClimbError::Kind::kInfeasibleStep,
                     "step rise " + std::to_string(expected_rise) + " m exceeds the lift cap of " +
                         std::to_string(g.climb_cap()) + " m");
  }
  ClimbState st;
  st.dir = dir;
  st.expected_rise = expected_rise;
  st.phase = ClimbPhase::kAlign;
  return st;
}

namespace {

double pair_reading(const SensorFrame& f, const char* a, const char* b, const ClimbParams& p) {
  const double x = f.at(a), y = f.at(b);
  if (std::isinf(x) && std::isinf(y)) return kNoReturn;
  if (std::isinf(x) != std::isinf(y) || std::abs(x - y) > p.lidar_disagree) {
    throw ClimbError(ClimbError::Kind::kMisaligned, std::string(a) + " and " + b + " disagree by more than " +
                                                        std::to_string(p.lidar_disagree) + " m");
  }
  return 0.5 * (x + y);
}

std::string down_name(int i) { return "L_d" + std::to_string(i + 1); }

struct Ctx {
  const RobotState& s;
  const SensorFrame& f;
  ClimbState& st;
  const RobotGeometry& g;
  const ClimbParams& p;
  ClimbOutput out;

  Commands& cmd() { return out.cmd; }

  void forward(double v) {
    out.cmd.v_l = v;
    out.cmd.v_r = v;
  }
  void rate_all(double r) {
    for (std::size_t i = 0; i < out.cmd.rates.size(); ++i) rate(static_cast<int>(i), r);
  }
  // True when actuator i (all pairs for i < 0) sits at the end stop in the
  // direction of r and the gate reading is within stop_tol of its target.
  bool at_stop(int i, int dir, double reading, double target) const {
    if (std::abs(reading - target) > p.stop_tol) return false;
    auto stopped = [&](double e) { return dir > 0 ? e >= g.actuator_stroke - 1e-9 : e <= 1e-9; };
    if (i >= 0) return stopped(s.scissor_ext[static_cast<std::size_t>(i)]);
    return std::any_of(s.scissor_ext.begin(), s.scissor_ext.end(), stopped);
  }
  void rate(int i, double r) {
    const double e = s.scissor_ext[static_cast<std::size_t>(i)];
    if (r > 0 && e >= g.actuator_stroke - 1e-9) {
      throw ClimbError(ClimbError::Kind::kStroke, "scissor pair " + std::to_string(i + 1) + " is at full stroke");
    }
    if (r < 0 && e <= 1e-9) {
      throw ClimbError(ClimbError::Kind::kStroke, "scissor pair " + std::to_string(i + 1) + " is fully closed");
    }
    out.cmd.rates[static_cast<std::size_t>(i)] = r;
  }

  void go(ClimbPhase to, int pair, double gate, double target) {
    out.changes.push_back({st.phase, st.pair, to, pair, gate, target});
    st.phase = to;
    st.pair = pair;
    st.travel = 0.0;
    st.fresh = true;
    st.prev_gate = std::numeric_limits<double>::quiet_NaN();
    st.held = 0;
    st.phase_start = f.timestamp;
    ++st.entries;
  }

  double front() const { return pair_reading(f, "L_fl", "L_fr", p); }
  double back() const { return pair_reading(f, "L_bl", "L_br", p); }

  // entry latch for a distance gate; a no-return falls back to odometry
  void latch(double reading, double offset, double odom_distance) {
    st.latched_reading = reading;
    if (std::isfinite(reading)) {
      st.target = reading + offset;
      st.target_by_odometry = false;
    } else {
      st.target = odom_distance;
      st.target_by_odometry = true;
    }
  }

  // A riser ahead closes at the odometry rate. If the reading stops doing so
  // (no-return, a jump, or a pitched beam landing on a tread) the rest of the
  // distance is done by odometry.
  void odometry_fallback(double m, double distance) {
    if (st.target_by_odometry) return;
    const double expected = st.latched_reading + (st.dir == ClimbDir::kUp ? -st.travel : st.travel);
    if (!std::isfinite(m) || std::abs(m - expected) > p.track_tol) {
      st.target_by_odometry = true;
      st.target = distance;
    }
  }

  // settle gate: wheel i on the ground and chassis level
  // Extending a front pair pitches the nose up, a rear pair pitches it down.
  // A pair that overshoots level backs off at the levelling rate.
  double pitch_excess(int i) const {
    const bool front_pair = g.pair_x[static_cast<std::size_t>(i)] > g.com_x();
    return front_pair ? f.pitch_meas : -f.pitch_meas;
  }
  bool settled(int i) const {
    const bool down = f.at(down_name(i)) <= g.d_hb + p.contact_tol;
    const double e = pitch_excess(i);
    return down && e >= -p.level_tol && e <= p.level_tol;
  }
  void settle_command(int i) {
    const bool down = f.at(down_name(i)) <= g.d_hb + p.contact_tol;
    if (!down) {
      rate(i, p.pair_rate);
    } else {
      rate(i, pitch_excess(i) > p.level_tol ? -p.level_rate : p.level_rate);
    }
  }
};

void common_prologue(ClimbState& st, const SensorFrame& f, const ClimbParams& p) {
  if (std::isnan(st.climb_start)) {
    st.climb_start = f.timestamp;
    st.phase_start = f.timestamp;
  }
  if (f.timestamp - st.climb_start > p.timeout) {
    throw ClimbError(ClimbError::Kind::kTimeout, std::string("climb did not finish within ") +
                                                     std::to_string(p.timeout) + " s (phase " +
                                                     phase_name(st.phase) + ")");
  }
  if (!st.fresh) st.travel += 0.5 * (f.odom_left + f.odom_right);
  st.fresh = false;
}

bool align_step(Ctx& c, const char* a, const char* b, double baseline, double sign) {
  if (c.f.timestamp - c.st.phase_start > c.p.align_timeout) {
    throw ClimbError(ClimbError::Kind::kAlignTimeout, "yaw alignment did not converge");
  }
  const auto cmd = yaw_align(c.f.at(a), c.f.at(b), baseline, sign, c.p);
  if (cmd.aligned) return true;
  c.out.cmd.v_l = -cmd.omega * c.g.wheelbase / 2;
  c.out.cmd.v_r = cmd.omega * c.g.wheelbase / 2;
  return false;
}

}  // namespace

ClimbOutput climb_up_tick(const RobotState& s, const SensorFrame& f, ClimbState& st, const RobotGeometry& g,
                          const ClimbParams& p) {
  if (st.dir != ClimbDir::kUp) throw std::logic_error("climb_up_tick on a descending climb");
  Ctx c{s, f, st, g, p, {Commands::zero(g.wheel_pairs), {}}};
  common_prologue(st, f, p);
  const double dob = g.d_of + g.d_ob;

  for (int guard = 0; guard < 8; ++guard) {
    switch (st.phase) {
      case ClimbPhase::kAlign:
        if (!align_step(c, "L_fl", "L_fr", g.d_W, 1.0)) return c.out;
        c.go(ClimbPhase::kRaise, 0, f.at("L_fl") - f.at("L_fr"), 0.0);
        break;

      case ClimbPhase::kRaise: {
        if (std::isnan(st.prev_gate) && f.at("L_df") > st.expected_rise) {
          // riser is below the forward lidars already; no jump will come
          st.step_height = st.expected_rise + g.d_hb;
          c.go(ClimbPhase::kLiftAll, 0, f.at("L_df"), st.step_height);
          break;
        }
        const double m = c.front();
        if (!detect_sudden_change(st.prev_gate, m, p.jump_threshold)) {
          st.prev_gate = m;
          c.rate_all(p.lift_rate);
          return c.out;
        }
        st.step_height = f.at("L_df") + g.d_hb;
        c.go(ClimbPhase::kLiftAll, 0, m, st.step_height);
        break;
      }

      case ClimbPhase::kLiftAll:
        if (f.at("L_df") <= st.step_height && !c.at_stop(-1, +1, f.at("L_df"), st.step_height)) {
          st.held = 0;
          c.rate_all(p.lift_rate);
          return c.out;
        }
        // keep lifting until the reading has stayed past the gate for a few ticks
        if (++st.held < p.gate_hold && !c.at_stop(-1, +1, f.at("L_df"), st.step_height)) {
          c.rate_all(p.lift_rate);
          return c.out;
        }
        c.go(ClimbPhase::kAdvanceOverEdge, 0, f.at("L_df"), st.step_height);
        break;

      case ClimbPhase::kAdvanceOverEdge:
        if (f.at("L_df") >= st.step_height - p.gate_margin) {
          c.forward(p.drive_speed);
          return c.out;
        }
        c.go(ClimbPhase::kLiftPair, 0, f.at("L_df"), st.step_height);
        break;

      case ClimbPhase::kLiftPair: {
        const double d = f.at(down_name(st.pair));
        if (d <= st.step_height && !c.at_stop(st.pair, -1, d, st.step_height)) {
          c.rate(st.pair, -p.pair_rate);
          return c.out;
        }
        const int i = st.pair;
        c.go(ClimbPhase::kAdvancePair, i, d, st.step_height);
        c.latch(c.front(), -dob, dob);
        break;
      }

      case ClimbPhase::kAdvancePair: {
        const double m = c.front();
        c.odometry_fallback(m, dob);
        const bool more = st.target_by_odometry ? st.travel < st.target : m >= st.target;
        if (more) {
          c.forward(p.drive_speed);
          return c.out;
        }
        c.go(ClimbPhase::kSettlePair, st.pair, st.target_by_odometry ? st.travel : m, st.target);
        break;
      }

      case ClimbPhase::kSettlePair:
        if (!c.settled(st.pair)) {
          c.settle_command(st.pair);
          return c.out;
        }
        if (st.pair + 1 < g.wheel_pairs) c.go(ClimbPhase::kLiftPair, st.pair + 1, f.pitch_meas, 0.0);
        else c.go(ClimbPhase::kDone, st.pair, f.pitch_meas, 0.0);
        break;

      case ClimbPhase::kDone:
        return c.out;

      default:
        throw std::logic_error(std::string("phase ") + phase_name(st.phase) + " is not part of Climb Up");
    }
  }
  return c.out;
}

ClimbOutput climb_down_tick(const RobotState& s, const SensorFrame& f, ClimbState& st, const RobotGeometry& g,
                            const ClimbParams& p) {
  if (st.dir != ClimbDir::kDown) throw std::logic_error("climb_down_tick on an ascending climb");
  Ctx c{s, f, st, g, p, {Commands::zero(g.wheel_pairs), {}}};
  common_prologue(st, f, p);
  const double dob = g.d_of + g.d_ob;

  for (int guard = 0; guard < 8; ++guard) {
    switch (st.phase) {
      case ClimbPhase::kAlign:
        if (!align_step(c, "L_bl", "L_br", g.d_W, -1.0)) return c.out;
        c.go(ClimbPhase::kApproach, 0, f.at("L_bl") - f.at("L_br"), 0.0);
        break;

      case ClimbPhase::kApproach: {
        const double d = f.at("L_df");
        if (!detect_sudden_change(st.prev_gate, d, p.jump_threshold)) {
          st.prev_gate = d;
          c.forward(p.drive_speed);
          return c.out;
        }
        c.go(ClimbPhase::kBackOff, 0, d, 0.0);
        break;
      }

      case ClimbPhase::kBackOff:
        if (st.travel > -p.back_off) {
          c.forward(-p.drive_speed);
          return c.out;
        }
        c.go(ClimbPhase::kAdvancePair, 0, st.travel, -p.back_off);
        c.latch(c.back(), dob, dob);
        break;

      case ClimbPhase::kAdvancePair:
      case ClimbPhase::kAdvanceFinal: {
        const double m = c.back();
        const double dist = dob;
        c.odometry_fallback(m, dist);
        const bool more = st.target_by_odometry ? st.travel < st.target : m <= st.target;
        if (more) {
          c.forward(p.drive_speed);
          return c.out;
        }
        const double gate = st.target_by_odometry ? st.travel : m;
        if (st.phase == ClimbPhase::kAdvancePair) c.go(ClimbPhase::kLowerPair, st.pair, gate, st.target);
        else c.go(ClimbPhase::kLowerAll, st.pair, gate, st.target);
        break;
      }

      case ClimbPhase::kLowerPair: {
        const double d = f.at(down_name(st.pair));
        if (d >= g.d_hb + p.contact_tol) {
          c.rate(st.pair, p.pair_rate);
          return c.out;
        }
        c.go(ClimbPhase::kSettlePair, st.pair, d, g.d_hb);
        break;
      }

      case ClimbPhase::kSettlePair:
        if (!c.settled(st.pair)) {
          c.settle_command(st.pair);
          return c.out;
        }
        if (st.pair + 1 < g.wheel_pairs) {
          c.go(ClimbPhase::kAdvancePair, st.pair + 1, f.pitch_meas, 0.0);
          c.latch(c.back(), dob, dob);
        } else {
          c.go(ClimbPhase::kAdvanceFinal, st.pair, f.pitch_meas, 0.0);
          c.latch(c.back(), dob, dob);
        }
        break;

      case ClimbPhase::kLowerAll:
        if (f.at("L_db") >= g.d_hb) {
          c.rate_all(-p.lift_rate);
          return c.out;
        }
        c.go(ClimbPhase::kDone, st.pair, f.at("L_db"), g.d_hb);
        break;

      case ClimbPhase::kDone:
        return c.out;

      default:
        throw std::logic_error(std::string("phase ") + phase_name(st.phase) + " is not part of Climb Down");
    }
  }
  return c.out;
}

static SensorFrame median_frame(const SensorFrame& f, ClimbState& st, int window) {
  st.history.push_back(f.values);
  while (static_cast<int>(st.history.size()) > window) st.history.pop_front();
  if (st.history.size() < 2) return f;
  SensorFrame out = f;
  std::vector<double> col(st.history.size());
  for (std::size_t k = 0; k < f.values.size(); ++k) {
    for (std::size_t h = 0; h < st.history.size(); ++h) col[h] = st.history[h][k];
    const auto mid = col.begin() + static_cast<std::ptrdiff_t>(col.size() / 2);
    std::nth_element(col.begin(), mid, col.end());
    out.values[k] = *mid;
  }
  return out;
}

ClimbOutput climb_tick(const RobotState& s, const SensorFrame& f, ClimbState& st, const RobotGeometry& g,
                       const ClimbParams& p) {
  const SensorFrame m = median_frame(f, st, p.median_window);
  return st.dir == ClimbDir::kUp ? climb_up_tick(s, m, st, g, p) : climb_down_tick(s, m, st, g, p);
}

Stability stability_check(const std::vector<double>& contact_x, double com_x, double half_width) {
  if (contact_x.empty()) return {false, -std::numeric_limits<double>::infinity()};
  const auto [lo, hi] = std::minmax_element(contact_x.begin(), contact_x.end());
  if (com_x < *lo) return {false, com_x - *lo};
  if (com_x > *hi) return {false, *hi - com_x};
  const double m = std::min({com_x - *lo, *hi - com_x, half_width});
  return {m > 0.0, m};
}

Stability stability_check(const RobotState& s, const RobotGeometry& g) {
  std::vector<double> xs;
  xs.reserve(s.contacts.size());
  for (const auto& c : s.contacts) xs.push_back(c.body_x);
  return stability_check(xs, g.com_x(), g.d_W / 2);
}

FailsafeStatus make_failsafe(const RobotGeometry& g) {
  FailsafeStatus st;
  st.safe_inset = g.L_db_mount * std::tan(deg2rad(45.0));
  return st;
}

FailsafeStatus failsafe_monitor(const SensorFrame& f, FailsafeStatus status, const RobotGeometry& g, bool climbing,
                                double threshold) {
  static const char* const kNames[4] = {"F_f", "F_b", "F_l", "F_r"};
  for (int k = 0; k < 4; ++k) {
    const double cur = f.at(kNames[k]);
    const double prev = status.prev[static_cast<std::size_t>(k)];
    status.prev[static_cast<std::size_t>(k)] = cur;
    if (!status.armed || status.triggered) continue;
    // only a rise in the reading means the ground fell away
    if (!detect_sudden_change(prev, cur, threshold) || !(cur > prev)) continue;
    if (climbing && std::isfinite(cur) && (cur - prev) * std::sin(g.failsafe_angle) <= g.climb_cap() + 0.02) {
      continue;
    }
    status.triggered = true;
    status.triggered_by = kNames[k];
  }
  return status;
}

}  // namespace stepfarm
