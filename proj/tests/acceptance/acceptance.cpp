// Acceptance run: one PASS/FAIL line per criterion, exit status is the number
// of failed criteria. Tolerances are pinned here and printed with each line.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include "stepfarm/climb.hpp"
#include "stepfarm/controllers.hpp"
#include "stepfarm/design_opt.hpp"
#include "stepfarm/report.hpp"
#include "stepfarm/scissor.hpp"
#include "stepfarm/sim.hpp"
#include "test_support.hpp"

using namespace stepfarm;

namespace {

struct Verdict {
  bool pass{true};
  std::string detail;

  void check(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail += (detail.empty() ? "" : "; ") + std::string("FAILED ") + what;
    }
  }
  void note(const std::string& s) { detail += (detail.empty() ? "" : "; ") + s; }
};

std::string fmt(const char* f, double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, x);
  return buf;
}

int failures = 0;

void report(int id, const char* title, const std::function<Verdict()>& body) {
  const auto t0 = std::chrono::steady_clock::now();
  Verdict v;
  try {
    v = body();
  } catch (const std::exception& e) {
    v.pass = false;
    v.detail = std::string("exception: ") + e.what();
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (!v.pass) ++failures;
  std::printf("[%s] %2d %s (%.1f s): %s\n", v.pass ? "PASS" : "FAIL", id, title, secs, v.detail.c_str());
  std::fflush(stdout);
}

std::string scenario_path(const char* name) { return std::string(STEPFARM_SCENARIOS) + "/" + name; }

// ---------------------------------------------------------------- 3 and 11

struct FrontRun {
  std::vector<ParetoFront> fronts;
  std::string csv;
};

FrontRun run_fronts() {
  FrontRun r;
  GaSettings s;
  s.seed = 1;
  for (int n = 2; n <= 4; ++n) {
    DesignProblem p;
    p.n = n;
    r.fronts.push_back(run(p, s));
  }
  r.csv = pareto_csv(r.fronts);
  return r;
}

// ---------------------------------------------------------------- 5 and 11

Scenario climb_scenario(double rise, bool round_trip) {
  Scenario sc;
  sc.name = "climb";
  sc.duration = 200;
  sc.terrace = TerraceProfile::uniform(3, rise, 2.5);
  sc.mission.kind = MissionKind::kClimb;
  sc.mission.round_trip = round_trip;
  return sc;
}

struct ClimbRun {
  SimResult result;
  double min_margin{1.0};
  std::string trace;
};

ClimbRun run_climb(const Scenario& sc) {
  ClimbRun c;
  std::ostringstream os;
  TraceCsvWriter w(os, sc.geometry.wheel_pairs);
  c.result = run_scenario(sc, [&](const TraceRow& row) {
    c.min_margin = std::min(c.min_margin, row.margin);
    w(row);
  });
  c.trace = os.str();
  return c;
}

// ---------------------------------------------------------------- criteria

Verdict c1() {
  Verdict v;
  const double s = stroke(prototype_datasheet_config());
  v.note("S = " + fmt("%.5f", s) + " m, want 0.242 +- 0.001");
  v.check(std::abs(s - 0.242) <= 0.001, "stroke");
  return v;
}

Verdict c2() {
  Verdict v;
  const double f = f_max(prototype_datasheet_config());
  const double rel = (f - 576.840) / 576.840;
  v.note("f_max = " + fmt("%.2f", f) + " N, " + fmt("%+.2f", 100 * rel) + "% from 576.840, band +-3%");
  v.check(std::abs(rel) <= 0.03, "force band");
  return v;
}

Verdict c3(const FrontRun& ga) {
  Verdict v;
  for (const auto& front : ga.fronts) {
    DesignProblem p;
    p.n = front.n_value;
    const auto& pts = front.points;
    const ParetoFront grid = grid_oracle(p, 25);
    const double ratio = hypervolume(front) / hypervolume(grid);
    const std::string tag = "n=" + std::to_string(p.n);
    v.note(tag + " HV ratio " + fmt("%.4f", ratio));
    v.check(ratio >= 0.95, tag + " HV >= 0.95 of grid");
    bool feasible = true, nondominated = true;
    for (const auto& a : pts) {
      feasible = feasible && a.feasible && p.in_box(a.cfg);
      for (const auto& b : pts) nondominated = nondominated && !dominates(b.f_max, b.stroke, a.f_max, a.stroke);
    }
    v.check(feasible, tag + " all feasible");
    v.check(nondominated, tag + " mutually non-dominated");
    if (p.n == 2) {
      const double f_ref = 576.840, s_ref = 0.242;
      double best = 1e9;
      bool near = false;
      for (const auto& a : pts) {
        const bool s_ok = std::abs(a.stroke - s_ref) <= 0.005;
        if (s_ok) best = std::min(best, std::abs(a.f_max - f_ref) / f_ref);
        near = near || (s_ok && std::abs(a.f_max - f_ref) <= 0.03 * f_ref);
      }
      v.note("closest F within S +- 0.005 m is " + fmt("%.1f", 100 * best) + "% off (band 3%)");
      v.check(near, "n=2 front near the prototype datasheet point");
    }
  }
  return v;
}

Verdict c4() {
  Verdict v;
  std::vector<double> grid;
  for (int k = 1; k <= 10; ++k) grid.push_back(0.05 * k);
  std::vector<double> fa, sa, fb, sb;
  for (double x : grid) {
    auto c = prototype_datasheet_config();
    c.a = x;
    fa.push_back(f_max(c));
    sa.push_back(stroke(c));
    auto d = prototype_datasheet_config();
    d.b = x;
    fb.push_back(f_max(d));
    sb.push_back(stroke(d));
  }
  const double r[4] = {testing::spearman(grid, fa), testing::spearman(grid, sa), testing::spearman(grid, fb),
                       testing::spearman(grid, sb)};
  v.note("rho(F,a) " + fmt("%.3f", r[0]) + ", rho(S,a) " + fmt("%.3f", r[1]) + ", rho(F,b) " + fmt("%.3f", r[2]) +
         ", rho(S,b) " + fmt("%.3f", r[3]));
  v.check(std::abs(r[0] + 1) < 1e-12 && std::abs(r[1] - 1) < 1e-12, "a sweep");
  v.check(std::abs(r[2] + 1) < 1e-12 && std::abs(r[3] - 1) < 1e-12, "b sweep");
  // n varies with the actuator anchor level i held at 1
  auto c = prototype_datasheet_config();
  double pf = 0, ps = 1;
  bool mono = true;
  for (int n = 2; n <= 4; ++n) {
    c.n = n;
    c.i = 1;
    mono = mono && f_max(c) > pf && stroke(c) < ps;
    pf = f_max(c);
    ps = stroke(c);
  }
  v.note("n trend at i = 1");
  v.check(mono, "F up and S down in n");
  return v;
}

Verdict c5(std::vector<std::string>* traces) {
  Verdict v;
  for (double rise : {0.1, 0.2, 0.3, 0.4}) {
    const auto sc = climb_scenario(rise, false);
    const ClimbRun c = run_climb(sc);
    if (traces) traces->push_back(c.trace);
    const std::string tag = "rise " + fmt("%.1f", rise);
    v.check(c.result.outcome == Outcome::kComplete && c.result.climbs_up == 1, tag + " climb up");
    v.check(std::abs(c.result.final_state.z - sc.geometry.d_hb) < 0.005, tag + " final elevation");
    v.check(c.min_margin > 0.0, tag + " COM inside supports");
  }
  v.note("rises 0.1-0.4 climbed");

  try {
    climb_begin(ClimbDir::kUp, 0.45, RobotGeometry{});
    v.check(false, "0.45 m accepted");
  } catch (const ClimbError& e) {
    v.check(e.kind == ClimbError::Kind::kInfeasibleStep, "0.45 m error kind");
  }
  const auto bad = run_climb(climb_scenario(0.45, false));
  v.check(bad.result.outcome == Outcome::kAborted && bad.result.ticks <= 1, "0.45 m fails fast");
  v.note("0.45 m rejected at tick " + std::to_string(bad.result.ticks));

  double worst = 0;
  for (double rise : {0.1, 0.2, 0.3, 0.4}) {
    const auto sc = climb_scenario(rise, true);
    const ClimbRun c = run_climb(sc);
    if (traces) traces->push_back(c.trace);
    const double dz = std::abs(c.result.final_state.z - (sc.geometry.d_hb - rise));
    worst = std::max(worst, dz);
    v.check(c.result.outcome == Outcome::kComplete && c.result.climbs_down == 1, "round trip " + fmt("%.1f", rise));
    v.check(c.min_margin > 0.0, "round trip COM " + fmt("%.1f", rise));
  }
  v.note("round-trip elevation error max " + fmt("%.4f", 1000 * worst) + " mm (< 5 mm)");
  v.check(worst < 0.005, "round-trip elevation");
  return v;
}

Verdict c6() {
  Verdict v;
  Scenario sc = load_scenario(scenario_path("edge_approach.json"));
  const SimResult r = run_scenario(sc);
  const double gap = r.final_state.pose.x() - sc.geometry.half_length - sc.terrace.riser_x(0, r.final_state.pose.y());
  v.note("stop gap " + fmt("%.4f", gap) + " m (>= 0.09)");
  v.check(r.outcome == Outcome::kEStop, "e-stop");
  v.check(gap >= 0.09, "stop distance");

  RobotGeometry g;
  const auto prof = TerraceProfile::uniform(1, 0.3, 50.0);
  const RobotState s = make_rest_state(g, prof, 25.0, 0.0, 0.0);
  NoiseSpec noise;
  noise.enabled = true;
  noise.lidar_sigma = 0.005;
  Rng rng(2024);
  FailsafeStatus fs = make_failsafe(g);
  long trips = 0;
  for (long k = 0; k < 1000000; ++k) {
    fs = failsafe_monitor(sense(s, g, prof, noise, &rng), fs, g);
    if (fs.triggered) {
      ++trips;
      fs = make_failsafe(g);
    }
  }
  v.note("1e6-tick soak false trips " + std::to_string(trips));
  v.check(trips == 0, "soak");
  return v;
}

Verdict c7() {
  Verdict v;
  double worst = 0;
  for (double width : {1.5, 2.0, 3.0}) {
    for (double phi_deg : {-10.0, 0.0, 10.0}) {
      Scenario sc;
      sc.duration = 30.0;
      sc.terrace = TerraceProfile::uniform(2, 0.3, width);
      sc.mission.kind = MissionKind::kDrive;
      sc.mission.start = {width - 0.7, 0.0, std::numbers::pi / 2 + deg2rad(phi_deg)};
      sc.mission.start_given = true;
      sc.disturbances.push_back({DisturbanceKind::kLateralSlip, 0.1, 0.0, kNoReturn});
      const SimResult r = run_scenario(sc);
      const std::string tag = "W " + fmt("%.1f", width) + " phi " + fmt("%.0f", phi_deg);
      if (r.widths.empty()) {
        v.check(false, tag + " no estimate");
        continue;
      }
      const double err = std::abs(r.widths.front().width - width);
      worst = std::max(worst, err);
      v.check(err <= 0.01, tag + " error " + fmt("%.4f", err));
    }
  }
  v.note("max width error " + fmt("%.5f", worst) + " m (<= 0.01)");
  return v;
}

struct PitchRun {
  double steady{0};  // mean |pitch| over the last 5 s, deg
  double last_above{0};  // last time |pitch| >= 0.5 deg
};

PitchRun run_pitch(Scenario sc) {
  PitchRun p;
  double sum = 0;
  int count = 0;
  const double t_tail = sc.duration - 5.0;
  run_scenario(sc, [&](const TraceRow& row) {
    const double a = std::abs(rad2deg(row.state->pitch));
    if (a >= 0.5) p.last_above = row.t;
    if (row.t >= t_tail) {
      sum += a;
      ++count;
    }
  });
  p.steady = count ? sum / count : 0;
  return p;
}

Verdict c8() {
  Verdict v;
  Scenario sc = load_scenario(scenario_path("pitch_payload.json"));
  const PitchRun adaptive = run_pitch(sc);
  sc.mission.adaptive = false;
  const PitchRun fixed = run_pitch(sc);
  v.note("steady |pitch| fixed " + fmt("%.3f", fixed.steady) + " deg, adaptive " + fmt("%.3f", adaptive.steady) +
         " deg (ratio >= 2)");
  v.note("adaptive last |pitch| >= 0.5 deg at t = " + fmt("%.2f", adaptive.last_above) + " s (< 15)");
  v.check(fixed.steady >= 2.0 * adaptive.steady, "fixed/adaptive ratio");
  v.check(adaptive.last_above < 15.0, "adaptive settling");
  return v;
}

Verdict c9() {
  Verdict v;
  const Scenario base = load_scenario(scenario_path("track_slip.json"));

  Scenario clean = base;
  clean.disturbances.clear();
  double late_max = 0;
  run_scenario(clean, [&](const TraceRow& row) {
    if (row.t >= 10.0) late_max = std::max(late_max, std::abs(row.cross_track));
  });
  v.note("max |e| after 10 s " + fmt("%.4f", late_max) + " m (< 0.02)");
  v.check(late_max < 0.02, "convergence");

  const double t_pulse = base.disturbances.front().t_start;
  auto peak = [&](bool damped) {
    Scenario sc = base;
    sc.mission.yaw_damping = damped;
    double m = 0;
    run_scenario(sc, [&](const TraceRow& row) {
      if (row.t >= t_pulse) m = std::max(m, std::abs(row.cross_track));
    });
    return m;
  };
  const double pd = peak(true), pu = peak(false);
  v.note("post-pulse peak damped " + fmt("%.4f", pd) + " m, undamped " + fmt("%.4f", pu) + " m");
  v.check(pd < pu, "damped peak smaller");
  return v;
}

Verdict c10() {
  Verdict v;
  SeederParams p;
  p.n_t = 10;
  p.d_sep = 0.1;
  p.alpha_step = deg2rad(1.8);
  const SeedRate r = seed_rate(1.0, p);
  v.note("omega " + fmt("%.12g", r.omega) + " rev/s, p " + fmt("%.12g", r.pulses) + " pulses/s");
  v.check(std::abs(r.omega - 1.0) < 1e-12, "omega");
  v.check(std::abs(r.pulses - 200.0) < 1e-9, "pulse rate");
  return v;
}

Verdict c11(const FrontRun& first, const std::vector<std::string>& climb_first) {
  Verdict v;
  const FrontRun again = run_fronts();
  v.check(again.csv == first.csv, "front CSV differs");
  std::vector<std::string> climb_again;
  c5(&climb_again);
  v.check(climb_again == climb_first, "climb trace CSV differs");
  v.note("front CSV sha256 " + sha256_hex(first.csv).substr(0, 12) + ", " + std::to_string(climb_first.size()) +
         " climb traces compared byte for byte");
  return v;
}

}  // namespace

int main() {
  report(1, "stroke at the prototype design", c1);
  report(2, "force band at the prototype design", c2);
  FrontRun fronts;
  report(3, "Pareto fronts vs grid oracle", [&] {
    fronts = run_fronts();
    return c3(fronts);
  });
  report(4, "design trends", c4);
  std::vector<std::string> climb_traces;
  report(5, "climb capability", [&] { return c5(&climb_traces); });
  report(6, "fail-safe", c6);
  report(7, "width estimation", c7);
  report(8, "pitch control under payload", c8);
  report(9, "path tracking", c9);
  report(10, "seeder rates", c10);
  report(11, "determinism", [&] { return c11(fronts, climb_traces); });
  std::printf("%d of 11 criteria failed\n", failures);
  return failures;
}
