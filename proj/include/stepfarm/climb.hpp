// Climb Up / Climb Down state machines, yaw alignment, stability and the
// fall-avoidance monitor.
//
// Gates are the literal ones: "stepHeight = L_df + d_hb", "while L_di <=
// stepHeight: CompressScissor(i)", "targetDistance = L_fl,fr - (d_of + d_ob)"
// and so on. A few things are added around them. A settle stage re-extends a
// pair after it has crossed the edge, until the wheel is on the ground and the
// chassis is level. Climb Down first finds the edge with L_df and backs off.
// A rise lower than the forward lidars at rest never produces the Raise jump;
// then stepHeight is taken from the expected rise instead of L_df. Under
// lidar noise the gates read a running median, with small hysteresis and
// end-stop allowances (see ClimbParams).
#pragma once

#include <array>
#include <deque>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "stepfarm/world.hpp"

namespace stepfarm {

enum class ClimbDir { kUp, kDown };

enum class ClimbPhase {
  kAlign,
  // up
  kRaise,            // extend all until the forward lidars clear the riser
  kLiftAll,          // extend all until L_df exceeds the latched step height
  kAdvanceOverEdge,  // drive until L_df sees the upper tread
  kLiftPair,         // retract pair i until its wheel clears the step
  // down
  kApproach,  // drive until L_df sees the drop
  kBackOff,   // reverse a fixed distance by odometry
  kLowerPair,  // extend pair i until its wheel reaches the lower tread
  kAdvanceFinal,
  kLowerAll,
  // both
  kAdvancePair,
  kSettlePair,
  kDone,
};

const char* phase_name(ClimbPhase p);

struct ClimbParams {
  double drive_speed{0.05};
  double lift_rate{0.02};  // per actuator while all pairs move
  double pair_rate{0.03};  // single-pair moves
  double jump_threshold{0.05};
  double gate_margin{0.05};  // hysteresis on L_df gates that start right at their threshold
  double stop_tol{0.015};  // a lift gate this close to its target passes once the actuator hits its end stop
  int median_window{5};
  int gate_hold{5};  // ticks the LiftAll gate must stay passed  // gates see a running median of this many frames; 1 reads raw
  double align_tol{0.003};
  double align_gain{1.0};  // rad/s per rad of misalignment
  double align_timeout{30.0};
  double contact_tol{0.01};  // a down lidar this close to d_hb counts as wheel on the ground
  double level_tol{1e-3};  // rad
  double level_rate{0.005};  // settle rate once the wheel is down
  double back_off{0.15};
  double lidar_disagree{0.1};
  double track_tol{0.02};  // allowed drift of an advance-gate reading from odometry
  double timeout{120.0};

  void validate() const;
};

class ClimbError : public std::runtime_error {
 public:
  enum class Kind { kInfeasibleStep, kAlignTimeout, kMisaligned, kTimeout, kStroke };
  ClimbError(Kind k, const std::string& what) : std::runtime_error(what), kind(k) {}
  Kind kind;
};

struct ClimbState {
  ClimbDir dir{ClimbDir::kUp};
  ClimbPhase phase{ClimbPhase::kAlign};
  int pair{0};  // 0-based i of the LiftPair/AdvancePair/SettlePair loop
  double expected_rise{0.0};
  double step_height{std::numeric_limits<double>::quiet_NaN()};
  double target{std::numeric_limits<double>::quiet_NaN()};
  bool target_by_odometry{false};
  double latched_reading{std::numeric_limits<double>::quiet_NaN()};
  double travel{0.0};  // odometry travel since phase entry
  bool fresh{true};    // first tick of the phase; its odometry belongs to the previous one
  double prev_gate{std::numeric_limits<double>::quiet_NaN()};
  int held{0};  // consecutive ticks the current gate has been passed
  double phase_start{0.0};
  double climb_start{std::numeric_limits<double>::quiet_NaN()};
  int entries{0};  // phases entered so far, for monotonicity checks
  std::deque<std::vector<double>> history;  // recent lidar values for the gate median

  bool done() const { return phase == ClimbPhase::kDone; }
};

struct PhaseChange {
  ClimbPhase from;
  int pair_from;
  ClimbPhase to;
  int pair_to;
  double gate_value;
  double gate_target;
};

struct ClimbOutput {
  Commands cmd;
  std::vector<PhaseChange> changes;  // in order; a tick may pass several gates
};

/// Throws ClimbError(kInfeasibleStep) before any motion if the rise is above
/// what the scissors can lift.
ClimbState climb_begin(ClimbDir dir, double expected_rise, const RobotGeometry& g);

/// One control tick. Gates read only the frame; the state is used to refuse
/// commands that would run an actuator past its stroke.
ClimbOutput climb_up_tick(const RobotState& s, const SensorFrame& f, ClimbState& st, const RobotGeometry& g,
                          const ClimbParams& p);
ClimbOutput climb_down_tick(const RobotState& s, const SensorFrame& f, ClimbState& st, const RobotGeometry& g,
                            const ClimbParams& p);
ClimbOutput climb_tick(const RobotState& s, const SensorFrame& f, ClimbState& st, const RobotGeometry& g,
                       const ClimbParams& p);

/// True iff |x_t - x_{t-1}| > threshold. A change into or out of no-return counts.
bool detect_sudden_change(double prev, double curr, double threshold = 0.05);
bool detect_sudden_change(const std::vector<double>& series, double threshold = 0.05);

struct AlignCommand {
  double omega{0.0};
  bool aligned{false};
};

/// Proportional rotation toward |a - b| < tol for a lidar pair a baseline apart.
/// sign = +1 when a > b means the robot is turned counter-clockwise of the target.
AlignCommand yaw_align(double a, double b, double baseline, double sign, const ClimbParams& p);

struct Stability {
  bool stable{false};
  double margin{0.0};  // signed distance of the COM to the support rectangle, m
};

Stability stability_check(const RobotState& s, const RobotGeometry& g);
Stability stability_check(const std::vector<double>& contact_x, double com_x, double half_width);

struct FailsafeStatus {
  bool armed{true};
  bool triggered{false};
  std::string triggered_by;
  double safe_inset{0.12};
  std::array<double, 4> prev{{std::numeric_limits<double>::quiet_NaN(), std::numeric_limits<double>::quiet_NaN(),
                              std::numeric_limits<double>::quiet_NaN(), std::numeric_limits<double>::quiet_NaN()}};
};

FailsafeStatus make_failsafe(const RobotGeometry& g);

/// Watches F_f, F_b, F_l, F_r for a sudden increase and latches on the first one.
/// With climbing set, a jump whose implied drop is finite and within the climb
/// cap is let through; a no-return or a deeper drop still trips.
FailsafeStatus failsafe_monitor(const SensorFrame& f, FailsafeStatus status, const RobotGeometry& g,
                                bool climbing = false, double threshold = 0.05);

}  // namespace stepfarm
