// Scenario description, the closed-loop runner and its trace/event output.
#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "stepfarm/climb.hpp"
#include "stepfarm/controllers.hpp"
#include "stepfarm/mission.hpp"
#include "stepfarm/world.hpp"

namespace stepfarm {

class ScenarioError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

enum class MissionKind { kFarm, kClimb, kTrack, kPitch, kDrive };

const char* mission_kind_name(MissionKind k);

struct MissionSpec {
  MissionKind kind{MissionKind::kFarm};
  Eigen::Vector3d start{0.0, 0.0, 0.0};
  bool start_given{false};
  double speed{0.3};
  double standoff{0.2};   // front plane to riser before a climb
  double s_start{0.0};    // along-step span of the rows
  double s_end{4.0};
  int n_crop_row{3};
  // climb
  ClimbDir climb_dir{ClimbDir::kUp};
  bool round_trip{false};
  double expected_rise{0.0};  // 0: take it from the terrace
  // track: straight line x = line_x heading +y
  double line_x{0.0};
  bool yaw_damping{true};
  // pitch: hold the chassis level while lifting
  bool adaptive{true};
  // drive
  double v_l{0.0};
  double v_r{0.0};
};

enum class PoseSource { kEkf, kTruth };

struct Scenario {
  std::string name{"scenario"};
  double dt{0.01};
  double duration{600.0};
  std::uint64_t seed{1};
  TerraceProfile terrace{TerraceProfile::uniform(3, 0.3, 2.5)};
  RobotGeometry geometry;
  NoiseSpec noise;
  PlantParams plant;
  std::vector<Disturbance> disturbances;
  PitchPidState pitch;
  PursuitParams pursuit;
  ClimbParams climb;
  EkfParams ekf;
  RowPlanParams rows;
  SeederParams seeder;
  AgricultureStrategy strategy;
  MissionSpec mission;
  PoseSource pose_source{PoseSource::kEkf};
  std::string source_path;  // where it was loaded from, for the manifest

  void validate() const;
};

/// Parses and validates; any schema problem is a ScenarioError.
Scenario scenario_from_json(const nlohmann::json& j);
Scenario load_scenario(const std::string& path);

// ---------------------------------------------------------------- results

enum class Outcome { kComplete = 0, kEStop = 1, kAborted = 3, kTipOver = 4 };

const char* outcome_name(Outcome o);

struct Event {
  double t{0.0};
  std::string kind;
  std::string detail;
};

struct TraceRow {
  double t{0.0};
  const RobotState* state{nullptr};
  const Commands* cmd{nullptr};
  const SensorFrame* frame{nullptr};
  Eigen::Vector3d est{Eigen::Vector3d::Zero()};
  double cross_track{0.0};
  double margin{0.0};
  std::string mode;
  std::string phase;
  int pair{0};
  bool failsafe{false};
  std::vector<std::string> events;
};

struct SimResult {
  Outcome outcome{Outcome::kComplete};
  std::string message;
  double t_end{0.0};
  RobotState final_state;
  std::vector<Event> events;
  int climbs_up{0};
  int climbs_down{0};
  double min_margin{std::numeric_limits<double>::infinity()};
  double forward_travel{0.0};  // signed odometry travel over the run
  std::vector<WidthEstimate> widths;
  std::string failsafe_by;
  int ticks{0};
};

using TraceObserver = std::function<void(const TraceRow&)>;

/// Runs to completion, e-stop, abort or the scenario duration.
SimResult run_scenario(const Scenario& sc, const TraceObserver& observer = {});

// ---------------------------------------------------------------- CSV

/// Streams trace rows as CSV. Columns, in order: t, x, y, yaw, z, pitch,
/// pitch_rate, ext_1..ext_N, v_l, v_r, rate_1..rate_N, est_x, est_y, est_yaw,
/// cross_track, margin, mode, phase, pair, failsafe, water, pesticide,
/// pump_duty, seeder_rate, plough, roller, one column per lidar symbol, events.
class TraceCsvWriter {
 public:
  TraceCsvWriter(std::ostream& os, int wheel_pairs);
  void operator()(const TraceRow& row);
  static std::vector<std::string> header(int wheel_pairs);

 private:
  std::ostream& os_;
  int pairs_;
};

void write_events_csv(std::ostream& os, const std::vector<Event>& events);

/// Shortest round-trip text for a double; inf and nan spelled out.
std::string format_number(double x);

}  // namespace stepfarm
