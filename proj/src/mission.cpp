#include "stepfarm/mission.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace stepfarm {

namespace {

double wrap(double a) { return std::remainder(a, 2.0 * std::numbers::pi); }

}  // namespace

Eigen::Vector3d odometry_update(const Eigen::Vector3d& pose, double d_left, double d_right, double wheelbase) {
  const double ds = 0.5 * (d_left + d_right);
  const double dth = (d_right - d_left) / wheelbase;
  const double m = pose.z() + 0.5 * dth;
  return {pose.x() + ds * std::cos(m), pose.y() + ds * std::sin(m), wrap(pose.z() + dth)};
}

// ---------------------------------------------------------------- EKF

WallLine WallLine::at_x(double c, WallSide side) {
  WallLine w;
  w.n = {1.0, 0.0};
  w.c = c;
  w.side = side;
  w.tangent = side == WallSide::kRight ? std::numbers::pi / 2 : -std::numbers::pi / 2;
  return w;
}

WallMeasurement wall_measurement(double l_front, double l_back, const RobotGeometry& g) {
  WallMeasurement z;
  z.phi = estimate_phi(l_front, l_back, g.d_L);
  z.dist = (0.5 * (l_front + l_back) + g.d_W / 2) * std::cos(z.phi);
  return z;
}

void EkfParams::validate() const {
  if (!(odom_sigma2 >= 0 && sigma_phi > 0 && sigma_dist > 0 && gate > 0)) {
    throw std::invalid_argument("EKF noise parameters must be positive");
  }
}

void ekf_predict(Ekf& ekf, double d_left, double d_right, double wheelbase, const EkfParams& p) {
  const double ds = 0.5 * (d_left + d_right);
  const double m = ekf.x.z() + 0.5 * (d_right - d_left) / wheelbase;
  const double c = std::cos(m), s = std::sin(m);

  Eigen::Matrix3d F = Eigen::Matrix3d::Identity();
  F(0, 2) = -ds * s;
  F(1, 2) = ds * c;

  Eigen::Matrix<double, 3, 2> G;
  const double k = ds / (2.0 * wheelbase);
  G << 0.5 * c + k * s, 0.5 * c - k * s,  //
      0.5 * s - k * c, 0.5 * s + k * c,   //
      -1.0 / wheelbase, 1.0 / wheelbase;
  const Eigen::Matrix2d Q = Eigen::Vector2d(p.odom_sigma2 * std::abs(d_left), p.odom_sigma2 * std::abs(d_right))
                                .asDiagonal();

  ekf.x = odometry_update(ekf.x, d_left, d_right, wheelbase);
  ekf.P = F * ekf.P * F.transpose() + G * Q * G.transpose();
  ekf.P = 0.5 * (ekf.P + ekf.P.transpose());
}

WallMeasurement wall_predict(const Eigen::Vector3d& pose, const WallLine& wall) {
  WallMeasurement z;
  z.dist = wall.c - wall.n.dot(pose.head<2>());
  const double rel = wrap(pose.z() - wall.tangent);
  z.phi = wall.side == WallSide::kRight ? rel : -rel;
  return z;
}

bool ekf_update_wall(Ekf& ekf, const WallMeasurement& z, const WallLine& wall, const EkfParams& p) {
  const WallMeasurement h = wall_predict(ekf.x, wall);
  Eigen::Vector2d nu(wrap(z.phi - h.phi), z.dist - h.dist);

  Eigen::Matrix<double, 2, 3> H = Eigen::Matrix<double, 2, 3>::Zero();
  H(0, 2) = wall.side == WallSide::kRight ? 1.0 : -1.0;
  H(1, 0) = -wall.n.x();
  H(1, 1) = -wall.n.y();
  const Eigen::Matrix2d R = Eigen::Vector2d(p.sigma_phi * p.sigma_phi, p.sigma_dist * p.sigma_dist).asDiagonal();
  const Eigen::Matrix2d S = H * ekf.P * H.transpose() + R;
  const Eigen::LDLT<Eigen::Matrix2d> ldlt(S);
  ekf.last_d2 = nu.dot(ldlt.solve(nu));
  if (!(ekf.last_d2 <= p.gate)) {
    ++ekf.rejected;
    return false;
  }
  const Eigen::Matrix<double, 3, 2> K = ekf.P * H.transpose() * S.inverse();
  ekf.x += K * nu;
  ekf.x.z() = wrap(ekf.x.z());
  const Eigen::Matrix3d IKH = Eigen::Matrix3d::Identity() - K * H;
  ekf.P = IKH * ekf.P * IKH.transpose() + K * R * K.transpose();
  ekf.P = 0.5 * (ekf.P + ekf.P.transpose());
  return true;
}

// ---------------------------------------------------------------- width

double estimate_phi(double l_front, double l_back, double d_L) { return std::atan((l_front - l_back) / d_L); }

double estimate_width(double l_front, double l_back, double d_W, double inset, double phi) {
  return (0.5 * (l_front + l_back) + d_W + inset) * std::cos(phi);
}

WidthMonitor::WidthMonitor(WallSide wall_side, const RobotGeometry& g, double threshold)
    : side_(wall_side), g_(g), threshold_(threshold) {}

std::optional<WidthEstimate> WidthMonitor::update(const SensorFrame& f, double along_step_position) {
  const double w = f.at(side_ == WallSide::kRight ? "W_l" : "W_r");
  const double prev = prev_;
  prev_ = w;
  if (std::isnan(prev)) return std::nullopt;
  const double d = w - prev;
  if (std::isfinite(d) ? std::abs(d) <= threshold_ : std::isinf(w) == std::isinf(prev)) return std::nullopt;

  const double lf = f.at(side_ == WallSide::kRight ? "L_rf" : "L_lf");
  const double lb = f.at(side_ == WallSide::kRight ? "L_rb" : "L_lb");
  if (!std::isfinite(lf) || !std::isfinite(lb)) return std::nullopt;
  WidthEstimate e;
  e.position = along_step_position;
  e.phi = estimate_phi(lf, lb, g_.d_L);
  e.width = estimate_width(lf, lb, g_.d_W, g_.L_db_mount * std::tan(deg2rad(45.0)), e.phi);
  return e;
}

// ---------------------------------------------------------------- planning

void RowPlanParams::validate() const {
  if (!(row_spacing > 0 && wall_margin >= 0 && edge_margin >= 0 && lookahead > 0 && robot_width > 0)) {
    throw std::invalid_argument("row plan parameters out of range");
  }
}

RowPlan plan_rows(int n, const std::vector<double>& widths, double s0, double s1, const RowPlanParams& p,
                  bool from_edge, int entry_dir) {
  p.validate();
  if (n < 1) throw std::invalid_argument("need at least one crop row");
  if (widths.empty()) throw std::invalid_argument("no width estimate to plan against");
  if (!(s1 > s0)) throw std::invalid_argument("row span must be positive");
  if (entry_dir != 1 && entry_dir != -1) throw std::invalid_argument("entry direction is +1 or -1");

  const double w = *std::min_element(widths.begin(), widths.end());
  const double q_first = p.wall_margin + p.robot_width / 2;
  const double q_limit = w - p.edge_margin - p.robot_width / 2;
  const double q_last = q_first + (n - 1) * p.row_spacing;
  if (q_last > q_limit + 1e-12) {
    throw PlanError(std::to_string(n) + " rows need " + std::to_string(q_last + p.edge_margin + p.robot_width / 2) +
                    " m of tread but the narrowest estimate is " + std::to_string(w) + " m");
  }

  RowPlan plan;
  plan.n_crop_row = n;
  plan.wall_margin = p.wall_margin;
  plan.edge_margin = p.edge_margin;
  plan.entry_dir = entry_dir;
  for (int j = 0; j < n; ++j) plan.row_q.push_back(q_first + j * p.row_spacing);
  if (from_edge) std::reverse(plan.row_q.begin(), plan.row_q.end());

  const int pieces = static_cast<int>(std::ceil((s1 - s0) / p.lookahead - 1e-12));
  int dir = entry_dir;
  for (int r = 0; r < n; ++r) {
    const double a = dir > 0 ? s0 : s1;
    const double b = dir > 0 ? s1 : s0;
    for (int k = 0; k <= pieces; ++k) {
      const double s = a + (b - a) * static_cast<double>(k) / pieces;
      const WaypointTag tag = (k == 0 && r > 0) ? WaypointTag::kTurn : WaypointTag::kRow;
      plan.waypoints.push_back({s, plan.row_q[static_cast<std::size_t>(r)], tag, r});
    }
    if (r + 1 < n) dir = -dir;
  }
  plan.exit_dir = dir;
  return plan;
}

// ---------------------------------------------------------------- strategy

const char* task_name(Task t) {
  switch (t) {
    case Task::kPlough: return "plough";
    case Task::kSow: return "sow";
    case Task::kRoll: return "roll";
    case Task::kWater: return "water";
    case Task::kPesticide: return "pesticide";
    case Task::kNone: return "none";
  }
  return "?";
}

Task parse_task(const std::string& s) {
  for (Task t : {Task::kPlough, Task::kSow, Task::kRoll, Task::kWater, Task::kPesticide, Task::kNone}) {
    if (s == task_name(t)) return t;
  }
  throw std::invalid_argument("unknown task '" + s + "'");
}

const std::vector<Task>& AgricultureStrategy::tasks_for(int step) const {
  static const std::vector<Task> kEmpty;
  if (step < 0 || step >= static_cast<int>(steps.size())) return kEmpty;
  return steps[static_cast<std::size_t>(step)];
}

std::vector<MissionCommand> schedule(const AgricultureStrategy& strategy, int n_steps) {
  if (n_steps < 1) throw std::invalid_argument("mission needs at least one step");
  std::vector<MissionCommand> out;
  for (int k = 0; k < n_steps; ++k) {
    std::vector<Task> tasks;
    for (Task t : strategy.tasks_for(k))
      if (t != Task::kNone) tasks.push_back(t);

    if (tasks.empty()) {
      out.push_back({CommandKind::kTraverse, k, 0, {}});
    } else {
      for (std::size_t j = 0; j < tasks.size(); ++j) {
        const int pass = static_cast<int>(j);
        out.push_back({CommandKind::kToolsOn, k, pass, {tasks[j]}});
        out.push_back({CommandKind::kTraverse, k, pass, {tasks[j]}});
        out.push_back({CommandKind::kToolsOff, k, pass, {}});
      }
    }
    if (k + 1 < n_steps) out.push_back({CommandKind::kClimb, k, 0, {}});
  }
  out.push_back({CommandKind::kDone, n_steps - 1, 0, {}});
  return out;
}

const MissionCommand& Scheduler::next() {
  if (finished()) throw std::logic_error("schedule exhausted");
  return cmds_[pos_++];
}

const MissionCommand& Scheduler::peek() const {
  if (finished()) throw std::logic_error("schedule exhausted");
  return cmds_[pos_];
}

}  // namespace stepfarm
