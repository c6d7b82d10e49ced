// Terrace world, lidar raycasting and the robot plant.
//
// World frame: x runs uphill across the terrace, y along it, z up. Yaw is
// measured from +x. Tread k spans X_k(y) <= x < X_{k+1}(y) at height
// z_k = rise_1 + ... + rise_k; the ground below X_0 sits at -rise_0 and X_N is
// a wall of unbounded height.
#pragma once

#include <array>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "stepfarm/rng.hpp"
#include "stepfarm/scissor.hpp"

namespace stepfarm {

inline constexpr double kNoReturn = std::numeric_limits<double>::infinity();
inline constexpr double kMaxLidarRange = 10.0;

/// Piecewise-linear function of one variable, held constant past its ends.
/// An empty function has no value; callers fall back to their own default.
struct PiecewiseLinear {
  std::vector<double> s;
  std::vector<double> v;

  bool empty() const { return s.empty(); }
  double operator()(double x) const;
  double min_value() const;
  void validate(const char* what) const;
  static PiecewiseLinear constant(double c) { return {{0.0}, {c}}; }
};

struct TerraceStep {
  double rise{0.3};
  double run{2.0};
  PiecewiseLinear width;  // optional per-step tread depth over y
  bool missing{false};    // a void where the tread should be
};

enum class WallSide { kLeft, kRight };

class TerraceError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct TerraceProfile {
  std::vector<TerraceStep> steps;
  PiecewiseLinear lateral_width;  // tread depth over y for steps without their own
  WallSide wall_side{WallSide::kLeft};
  double x0{0.0};

  int count() const { return static_cast<int>(steps.size()); }
  void validate(double robot_length = 0.0) const;

  double tread_width(int k, double y) const;
  /// x of riser k at y; k = count() is the terminal wall.
  double riser_x(int k, double y) const;
  /// -1 below the first riser, k on tread k, count() inside the terminal wall.
  int region(double x, double y) const;
  double region_height(int r) const;
  double ground(double x, double y) const { return region_height(region(x, y)); }
  /// Riser k as (x, y) vertices, y ascending, extended far past the breakpoints.
  std::vector<Eigen::Vector2d> riser_polyline(int k) const;

  /// Steps of equal rise and constant run.
  static TerraceProfile uniform(int n_steps, double rise, double run);
};

/// Distance along a unit direction to the first surface, riser or wall, or
/// kNoReturn past max_range. An origin inside the ground reads 0.
double raycast(const Eigen::Vector3d& origin, const Eigen::Vector3d& direction, const TerraceProfile& profile,
               double max_range = kMaxLidarRange);

// ---------------------------------------------------------------- robot

/// Body frame: x forward from the chassis geometric centre, y left, z up from
/// the chassis bottom plane.
struct RobotGeometry {
  double d_W{0.6};
  double d_L{0.4};
  double d_hb{0.18};
  double d_of{0.10};
  double d_ob{0.15};
  double L_db_mount{0.12};
  int wheel_pairs{2};
  int dummy_pairs{4};
  double wheelbase{0.6};  // differential-drive track
  double mass{40.0};

  std::vector<double> pair_x{0.1125, -0.1125};
  std::vector<double> inner_dummy_x{0.0375, -0.0625};
  double half_length{0.2925};
  double back_plane{-0.25};
  double leg_closed{0.174};   // ground to chassis bottom, scissor fully closed
  double dummy_drop{0.177};   // chassis bottom to dummy-wheel bottom
  double lidar_mount_z{0.0};  // forward/back/side horizontal lidars
  double failsafe_angle{deg2rad(25.0)};
  double side_down_angle{deg2rad(45.0)};
  double bogie_mass_fraction{0.1};
  double max_lip{0.01};
  double max_climb{0.4};
  double actuator_stroke{0.25};
  ScissorConfig scissor{prototype_built_config()};

  void validate() const;

  double front_plane() const { return pair_x.front() + d_ob - d_of; }
  /// All dummy axles, front to back.
  std::vector<double> dummy_x() const;
  double com_x() const;
  double length() const { return 2 * half_length; }

  /// Chassis lift over the closed scissor for an actuator extension.
  double lift(double ext) const;
  double extension_for_lift(double lift) const;
  double max_lift() const { return lift(actuator_stroke); }
  double rest_extension() const { return extension_for_lift(d_hb - leg_closed); }
  /// Step rise the climb can handle with this geometry.
  double climb_cap() const;

  /// Mount heights below the chassis bottom that put the 25 and 45 degree
  /// footprints L_db_mount outside the body at rest.
  double failsafe_mount_z() const;
  double side_down_mount_z() const;
};

enum class SupportKind { kWheel, kDummy };

struct Contact {
  SupportKind kind{SupportKind::kWheel};
  int index{0};      // pair or dummy index, front to back
  double body_x{0};  // along the chassis
  Eigen::Vector3d world{Eigen::Vector3d::Zero()};
};

struct ToolState {
  bool water{false};
  bool pesticide{false};
  double pump_duty{0.0};
  double seeder_rate{0.0};  // pulses/s
  bool plough_down{false};
  bool roller_down{false};
};

struct RobotState {
  Eigen::Vector3d pose{Eigen::Vector3d::Zero()};  // x, y, yaw
  double z{0.0};  // chassis bottom at the body origin
  double pitch{0.0};
  double pitch_rate{0.0};
  std::vector<double> scissor_ext;  // actuator extension per pair, 0..stroke
  std::vector<double> support_ground;  // ground height under each support last tick
  int on_step{0};
  std::vector<Contact> contacts;
  double v{0.0};
  double omega{0.0};
  double enc_left{0.0};   // commanded wheel travel over the last tick
  double enc_right{0.0};
  ToolState tools;
  double t{0.0};

  double pair_leg(const RobotGeometry& g, int i) const;
  /// World point of a body-frame point.
  Eigen::Vector3d body_to_world(const Eigen::Vector3d& b) const;
  Eigen::Vector3d body_dir_to_world(const Eigen::Vector3d& d) const;
  double chassis_bottom_at(double body_x) const;
};

/// Lidar symbols in a fixed order: L_fl L_fr L_bl L_br L_lf L_lb L_rf L_rb,
/// L_d1..L_dN, L_df, L_db, W_l, W_r, F_f, F_b, F_l, F_r.
std::vector<std::string> lidar_symbols(int wheel_pairs);

struct SensorFrame {
  double timestamp{0.0};
  std::vector<std::string> names;
  std::vector<double> values;
  double odom_left{0.0};
  double odom_right{0.0};
  double pitch_meas{0.0};
  double yaw_rate_meas{0.0};  // gyro

  double at(const std::string& name) const;
  bool has(const std::string& name) const;
  std::size_t size() const { return values.size(); }
};

struct NoiseSpec {
  bool enabled{false};
  double lidar_sigma{0.005};
  double pitch_sigma{0.0};
};

/// Robot standing level at rest on the ground under (x, y), heading yaw.
RobotState make_rest_state(const RobotGeometry& g, const TerraceProfile& profile, double x, double y, double yaw);

SensorFrame sense(const RobotState& state, const RobotGeometry& geom, const TerraceProfile& profile,
                  const NoiseSpec& noise, Rng* rng = nullptr);

// ---------------------------------------------------------------- plant

enum class DisturbanceKind { kPayloadTorque, kLateralSlip, kWheelSlip };

/// Active for t in [t_start, t_end). Payload torque is nose-down positive (N m);
/// lateral slip is body-left positive (m/s); wheel slip is the fraction of
/// right-wheel travel lost, negative for the left wheel.
struct Disturbance {
  DisturbanceKind kind{DisturbanceKind::kPayloadTorque};
  double magnitude{0.0};
  double t_start{0.0};
  double t_end{std::numeric_limits<double>::infinity()};

  bool active(double t) const { return t >= t_start && t < t_end; }
};

enum class PitchModel { kSupport, kDynamic };

struct PlantParams {
  PitchModel pitch_model{PitchModel::kSupport};
  double k_a{2000.0};     // N m per m of front-back extension difference
  double damping{30.0};   // N m s
  double inertia{4.0};    // kg m^2
  double sag{0.002};      // m/s of difference lost per N m of payload torque
  double yaw_lag{0.0};    // s, first-order lag on the body yaw rate
  double max_wheel_speed{1.5};
  double max_actuator_rate{0.05};

  void validate() const;
};

struct Commands {
  double v_l{0.0};
  double v_r{0.0};
  std::vector<double> rates;  // actuator rate per pair, m/s

  bool is_zero() const;
  static Commands zero(int pairs) { return {0.0, 0.0, std::vector<double>(pairs, 0.0)}; }
};

class TipOverError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class CollisionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct StepInfo {
  bool actuator_saturated{false};
  bool stalled{false};  // drive requested with no wheel pair on the ground
  double lift_before{0.0};
};

/// Rebuilds z, pitch, contacts and support_ground from legs and terrain
/// (support model). Throws TipOverError if the COM is outside the support span.
void settle_on_supports(RobotState& s, const RobotGeometry& g, const TerraceProfile& profile);

RobotState step_kinematics(const RobotState& state, const Commands& cmd, double dt, const RobotGeometry& geom,
                           const TerraceProfile& profile, const PlantParams& plant,
                           const std::vector<Disturbance>& disturbances = {}, StepInfo* info = nullptr);

/// Sum of active disturbances of one kind at time t.
double disturbance_at(const std::vector<Disturbance>& ds, DisturbanceKind kind, double t);

}  // namespace stepfarm
