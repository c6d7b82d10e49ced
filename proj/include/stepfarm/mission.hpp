// Localization (odometry, EKF on a known wall, terrace width), row planning
// and task scheduling for one terrace farm.
#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "stepfarm/world.hpp"

namespace stepfarm {

// ---------------------------------------------------------------- odometry

/// Midpoint-arc dead reckoning. Returns the new (x, y, yaw).
Eigen::Vector3d odometry_update(const Eigen::Vector3d& pose, double d_left, double d_right, double wheelbase);

// ---------------------------------------------------------------- EKF

/// Straight wall {p : n.p = c}, n pointing from the robot side into the wall.
/// tangent is the wall direction the robot drives along when aligned.
struct WallLine {
  Eigen::Vector2d n{1.0, 0.0};
  double c{0.0};
  double tangent{0.0};  // rad
  WallSide side{WallSide::kRight};

  /// Wall at x = c with the robot on the low-x side, driving along +y (wall on
  /// the right) or -y (wall on the left).
  static WallLine at_x(double c, WallSide side);
};

struct WallMeasurement {
  double phi{0.0};   // heading relative to the wall tangent, rad, away from the wall positive
  double dist{0.0};  // body centre to wall, m
};

/// phi and distance from the wall-side lidar pair.
WallMeasurement wall_measurement(double l_front, double l_back, const RobotGeometry& g);

struct EkfParams {
  double odom_sigma2{1e-4};  // m^2 of wheel travel variance per m travelled
  double sigma_phi{0.01};    // rad
  double sigma_dist{0.01};   // m
  double gate{9.0};          // squared Mahalanobis limit

  void validate() const;
};

struct Ekf {
  Eigen::Vector3d x{Eigen::Vector3d::Zero()};
  Eigen::Matrix3d P{Eigen::Matrix3d::Identity() * 1e-6};
  int rejected{0};
  double last_d2{0.0};  // squared Mahalanobis distance of the last update
};

void ekf_predict(Ekf& ekf, double d_left, double d_right, double wheelbase, const EkfParams& p);

/// Predicted measurement for a pose.
WallMeasurement wall_predict(const Eigen::Vector3d& pose, const WallLine& wall);

/// Returns false and leaves the estimate untouched if the innovation fails the gate.
bool ekf_update_wall(Ekf& ekf, const WallMeasurement& z, const WallLine& wall, const EkfParams& p);

// ---------------------------------------------------------------- terrace width

/// atan((l_front - l_back) / d_L).
double estimate_phi(double l_front, double l_back, double d_L);

/// [(l_front + l_back)/2 + d_W + inset] cos(phi).
double estimate_width(double l_front, double l_back, double d_W, double inset, double phi);

struct WidthEstimate {
  double position{0.0};  // along the step
  double width{0.0};
  double phi{0.0};
};

/// Watches the edge-side 45 degree lidar; on a sudden change it takes a width
/// reading from the wall-side pair. No-return on the wall side gives nothing.
class WidthMonitor {
 public:
  WidthMonitor(WallSide wall_side, const RobotGeometry& g, double threshold = 0.05);
  std::optional<WidthEstimate> update(const SensorFrame& f, double along_step_position);
  void reset() { prev_ = std::numeric_limits<double>::quiet_NaN(); }

 private:
  WallSide side_;
  RobotGeometry g_;
  double threshold_;
  double prev_{std::numeric_limits<double>::quiet_NaN()};
};

struct LocalizationState {
  Ekf ekf;
  int step_number{0};  // counted from the starting step, increasing toward the top
  int crop_row{0};
  double dist_left{0.0};
  double dist_right{0.0};
  std::vector<WidthEstimate> width_estimates;
};

// ---------------------------------------------------------------- planning

class PlanError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct RowPlanParams {
  double row_spacing{0.5};
  double wall_margin{0.3};
  double edge_margin{0.3};
  double lookahead{0.5};  // max waypoint spacing along a row
  double robot_width{0.6};

  void validate() const;
};

enum class WaypointTag { kRow, kTurn };

/// Step frame: s along the step, q from the wall toward the edge.
struct Waypoint {
  double s{0.0};
  double q{0.0};
  WaypointTag tag{WaypointTag::kRow};
  int row{0};
};

struct RowPlan {
  std::vector<Waypoint> waypoints;
  int n_crop_row{0};
  std::vector<double> row_q;  // wall offset of each row, in visiting order
  double wall_margin{0.0};
  double edge_margin{0.0};
  int entry_dir{1};  // +1 drives toward +s on the first row
  int exit_dir{1};
};

/// Boustrophedon over n rows between s0 and s1. Rows are visited from the edge
/// side toward the wall when from_edge is set. The narrowest width in
/// `widths` bounds every row.
RowPlan plan_rows(int n_crop_row, const std::vector<double>& widths, double s0, double s1, const RowPlanParams& p,
                  bool from_edge = true, int entry_dir = 1);

// ---------------------------------------------------------------- strategy

enum class Task { kPlough, kSow, kRoll, kWater, kPesticide, kNone };

const char* task_name(Task t);
Task parse_task(const std::string& s);

struct TaskParams {
  double seed_spacing{0.1};  // d_sep, m
  double spray_duty{0.6};
  double plough_depth{0.05};
  double roller_height{0.0};
};

struct AgricultureStrategy {
  std::vector<std::vector<Task>> steps;  // task list per terrace step, bottom first
  TaskParams params;

  const std::vector<Task>& tasks_for(int step) const;
};

enum class CommandKind { kTraverse, kToolsOn, kToolsOff, kClimb, kDone };

struct MissionCommand {
  CommandKind kind{CommandKind::kDone};
  int step{0};
  int pass{0};
  std::vector<Task> tools;  // for kToolsOn
};

/// Ordered high-level commands for a mission over n_steps treads: for each
/// step, one traversal pass per task (tools on only along rows), then a climb
/// request if there is a next step. Water and pesticide always get separate
/// passes; an empty task list still traverses once.
std::vector<MissionCommand> schedule(const AgricultureStrategy& strategy, int n_steps);

/// Cursor over the schedule.
class Scheduler {
 public:
  Scheduler(const AgricultureStrategy& s, int n_steps) : cmds_(schedule(s, n_steps)) {}
  const MissionCommand& next();
  const MissionCommand& peek() const;
  bool finished() const { return pos_ >= cmds_.size(); }
  const std::vector<MissionCommand>& all() const { return cmds_; }

 private:
  std::vector<MissionCommand> cmds_;
  std::size_t pos_{0};
};

}  // namespace stepfarm
