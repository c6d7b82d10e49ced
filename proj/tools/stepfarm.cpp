// stepfarm: design optimisation, formula evaluation, closed-loop simulation
// and plotting from one binary. Exit codes: 0 ok / mission complete, 1
// fail-safe stop, 2 bad input, 3 empty front or aborted mission, 4 tip-over.
#include <cstdlib>
#include <filesystem>
#include <optional>
#include <set>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "stepfarm/design_opt.hpp"
#include "stepfarm/report.hpp"
#include "stepfarm/scissor.hpp"
#include "stepfarm/sim.hpp"

using namespace stepfarm;
using nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitBadInput = 2;
constexpr int kExitEmpty = 3;

struct InputError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string out_dir(const std::string& flag) {
  if (!flag.empty()) return flag;
  if (const char* env = std::getenv("STEPFARM_OUT_DIR"); env && *env) return env;
  return "out";
}

json read_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open " + path);
  try {
    return json::parse(in);
  } catch (const std::exception& e) {
    throw InputError(path + ": " + e.what());
  }
}

std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void finish(OutputSet& out, RunManifest m, const std::string& name = "manifest.json") {
  m.tool_version = tool_version();
  m.output_hashes = out.hashes();
  out.add(name, m.to_json().dump(2) + "\n");
  for (const auto& p : out.commit()) std::cerr << "wrote " << p << "\n";
}

// ---------------------------------------------------------------- design

struct DesignConfig {
  std::vector<int> n_values{2, 3, 4};
  DesignProblem problem;
  GaSettings ga;
  double thickness_mm{3.0};
};

DesignConfig parse_design(const json& j) {
  DesignConfig c;
  if (!j.is_object()) throw InputError("design config must be a JSON object");
  static const std::set<std::string> keys{"n",           "population_size", "generations",   "seed",
                                          "threads",     "pareto_fraction", "crossover_rate", "mutation_rate",
                                          "eta_c",       "eta_m",           "stagnation_window", "stagnation_tol",
                                          "L_load",      "H",               "f_cap",         "ab_lo",
                                          "ab_hi",       "theta_lo_deg",    "theta_hi_deg",  "thickness_mm"};
  for (const auto& [k, v] : j.items()) {
    if (!keys.count(k)) throw InputError("design config: unknown key '" + k + "'");
  }
  try {
    if (j.contains("n")) c.n_values = j.at("n").get<std::vector<int>>();
    auto& g = c.ga;
    g.population_size = j.value("population_size", g.population_size);
    g.generations = j.value("generations", g.generations);
    g.seed = j.value("seed", g.seed);
    g.threads = j.value("threads", g.threads);
    g.pareto_fraction = j.value("pareto_fraction", g.pareto_fraction);
    g.crossover_rate = j.value("crossover_rate", g.crossover_rate);
    g.mutation_rate = j.value("mutation_rate", g.mutation_rate);
    g.eta_c = j.value("eta_c", g.eta_c);
    g.eta_m = j.value("eta_m", g.eta_m);
    g.stagnation_window = j.value("stagnation_window", g.stagnation_window);
    g.stagnation_tol = j.value("stagnation_tol", g.stagnation_tol);
    auto& p = c.problem;
    p.L_load = j.value("L_load", p.L_load);
    p.H = j.value("H", p.H);
    p.f_cap = j.value("f_cap", p.f_cap);
    p.ab_lo = j.value("ab_lo", p.ab_lo);
    p.ab_hi = j.value("ab_hi", p.ab_hi);
    if (j.contains("theta_lo_deg")) p.theta_lo = deg2rad(j.at("theta_lo_deg").get<double>());
    if (j.contains("theta_hi_deg")) p.theta_hi = deg2rad(j.at("theta_hi_deg").get<double>());
    c.thickness_mm = j.value("thickness_mm", c.thickness_mm);
  } catch (const json::exception& e) {
    throw InputError(std::string("design config: ") + e.what());
  }
  if (c.n_values.empty()) throw InputError("design config: n list is empty");
  for (int n : c.n_values) {
    if (n < 1 || n > 10) throw InputError("design config: n must lie in [1, 10]");
  }
  const auto& p = c.problem;
  if (!(p.L_load > 0 && p.H > 0 && p.f_cap > 0)) throw InputError("design config: L_load, H and f_cap must be positive");
  if (!(p.ab_lo > 0 && p.ab_lo < p.ab_hi && p.ab_hi <= 0.5)) throw InputError("design config: need 0 < ab_lo < ab_hi <= 0.5");
  if (!(p.theta_lo > 0 && p.theta_lo < p.theta_hi && p.theta_hi < deg2rad(90.0))) {
    throw InputError("design config: need 0 < theta_lo < theta_hi < 90 deg");
  }
  try {
    c.ga.validate();
  } catch (const std::invalid_argument& e) {
    throw InputError(std::string("design config: ") + e.what());
  }
  return c;
}

int cmd_design(const std::string& config, const std::string& dir, std::optional<std::uint64_t> seed,
               std::optional<unsigned> threads) {
  DesignConfig c = config.empty() ? DesignConfig{} : parse_design(read_json(config));
  if (seed) c.ga.seed = *seed;
  if (threads) c.ga.threads = *threads;

  std::vector<ParetoFront> fronts;
  json runs = json::array();
  for (int n : c.n_values) {
    DesignProblem p = c.problem;
    p.n = n;
    const RunResult r = run_detailed(p, c.ga);
    if (r.front.points.empty()) {
      std::cerr << "design: empty front for n = " << n << "\n";
      return kExitEmpty;
    }
    std::cout << "n = " << n << ": " << r.front.points.size() << " front points, " << r.generations_run
              << " generations, hypervolume " << format_number(hypervolume(r.front)) << "\n";
    runs.push_back({{"n", n}, {"points", r.front.points.size()}, {"generations", r.generations_run},
                    {"evaluations", r.evaluations}, {"hypervolume", hypervolume(r.front)}});
    fronts.push_back(r.front);
  }

  OutputSet out(dir);
  out.add("pareto.csv", pareto_csv(fronts));
  std::ostringstream ds;
  DatasheetOptions opt;
  opt.thickness_mm = c.thickness_mm;
  export_datasheet(ds, fronts, opt);
  out.add("datasheet.csv", ds.str());

  RunManifest m;
  m.subcommand = "design";
  if (!config.empty()) m.config_paths.push_back(config);
  m.seed = c.ga.seed;
  m.extra = {{"fronts", runs}};
  finish(out, m);
  return kExitOk;
}

// ---------------------------------------------------------------- sim

int cmd_sim(const std::string& scenario, const std::string& dir, std::optional<std::uint64_t> seed) {
  Scenario sc;
  try {
    sc = load_scenario(scenario);
  } catch (const ScenarioError& e) {
    throw InputError(e.what());
  }
  if (seed) sc.seed = *seed;

  std::ostringstream trace;
  TraceCsvWriter writer(trace, sc.geometry.wheel_pairs);
  const SimResult r = run_scenario(sc, [&](const TraceRow& row) { writer(row); });
  std::ostringstream events;
  write_events_csv(events, r.events);

  std::cout << "outcome: " << outcome_name(r.outcome);
  if (!r.message.empty()) std::cout << " (" << r.message << ")";
  std::cout << "\nt_end: " << format_number(r.t_end) << " s\nclimbs: " << r.climbs_up << " up, " << r.climbs_down
            << " down\nmin stability margin: " << format_number(r.min_margin) << " m\n";

  OutputSet out(dir);
  out.add("trace.csv", trace.str());
  out.add("events.csv", events.str());
  RunManifest m;
  m.subcommand = "sim";
  m.config_paths.push_back(scenario);
  m.seed = sc.seed;
  m.extra = {{"scenario", sc.name},       {"outcome", outcome_name(r.outcome)}, {"message", r.message},
             {"t_end", r.t_end},          {"ticks", r.ticks},                    {"climbs_up", r.climbs_up},
             {"climbs_down", r.climbs_down}, {"min_margin", r.min_margin}};
  finish(out, m);
  return static_cast<int>(r.outcome);
}

// ---------------------------------------------------------------- eval

struct EvalArgs {
  std::string config;
  std::optional<double> a, b, D, theta_min_deg, H, load, theta_deg;
  std::optional<int> n, i;
  std::string rule{"climb"};
};

int cmd_eval(const EvalArgs& args, const std::string& dir) {
  ScissorConfig c = prototype_datasheet_config();
  if (!args.config.empty()) {
    const json j = read_json(args.config);
    try {
      c.a = j.value("a", c.a);
      c.b = j.value("b", c.b);
      c.D = j.value("D", c.D);
      c.n = j.value("n", c.n);
      c.i = j.value("i", c.i);
      c.H = j.value("H", c.H);
      c.L_load = j.value("L_load", c.L_load);
      if (j.contains("theta_min_deg")) c.theta_min = deg2rad(j.at("theta_min_deg").get<double>());
    } catch (const json::exception& e) {
      throw InputError(std::string("eval config: ") + e.what());
    }
  }
  if (args.a) c.a = *args.a;
  if (args.b) c.b = *args.b;
  if (args.D) c.D = *args.D;
  if (args.n) c.n = *args.n;
  if (args.i) c.i = *args.i;
  if (args.H) c.H = *args.H;
  if (args.load) c.L_load = *args.load;
  if (args.theta_min_deg) c.theta_min = deg2rad(*args.theta_min_deg);
  c.theta_max_rule = args.rule == "right" ? ThetaMaxRule::kRightAngle : ThetaMaxRule::kClimbHeight;

  std::ostringstream o;
  o << std::fixed;
  try {
    check_geometry(c);
    o << "a " << std::setprecision(4) << c.a << "  b " << c.b << "  D " << c.D << " m  n " << c.n << "  i " << c.i
      << "  theta_min " << rad2deg(c.theta_min) << " deg  H " << c.H << " m  L " << c.L_load << " N\n";
    if (args.theta_deg) {
      const ScissorEval e = evaluate_at(c, deg2rad(*args.theta_deg));
      o << std::setprecision(3) << "theta " << *args.theta_deg << " deg: h = " << e.h << " m  l = " << e.l
        << " m  F = " << std::setprecision(1) << e.F << " N\n";
    }
    const double tmax = theta_max_for_climb(c);
    o << std::setprecision(3);
    o << "h(theta_min) = " << height(c, c.theta_min) << " m\n";
    o << "l(theta_min) = " << actuator_length(c, c.theta_min) << " m\n";
    o << "theta_max = " << rad2deg(tmax) << " deg (" << (args.rule == "right" ? "right-angle" : "climb-height")
      << " rule)\n";
    o << "F_max = " << std::setprecision(1) << f_max(c) << " N\n";
    o << "S = " << std::setprecision(3) << stroke(c) << " m\n";
  } catch (const ScissorError& e) {
    throw InputError(e.what());
  }
  std::cout << o.str();

  OutputSet out(dir);
  out.add("eval.txt", o.str());
  RunManifest m;
  m.subcommand = "eval";
  if (!args.config.empty()) m.config_paths.push_back(args.config);
  finish(out, m);
  return kExitOk;
}

// ---------------------------------------------------------------- plot

int cmd_plot(const std::string& csv, const std::string& kind, const std::string& dir) {
  CsvTable t;
  try {
    t = parse_csv(read_text(csv));
  } catch (const CsvError& e) {
    throw InputError(csv + ": " + e.what());
  }
  const bool is_front = t.column("F_max_N") >= 0 || t.column("f_max") >= 0;
  std::string stem = std::filesystem::path(csv).stem().string();
  OutputSet out(dir);
  try {
    if (kind == "pareto" || (kind == "auto" && is_front)) {
      out.add(stem + "_pareto.svg", plot_pareto(t));
    } else if (kind == "pitch") {
      out.add(stem + "_pitch.svg", plot_pitch(t));
    } else if (kind == "cross-track") {
      out.add(stem + "_cross_track.svg", plot_cross_track(t));
    } else if (kind == "trajectory") {
      out.add(stem + "_trajectory.svg", plot_trajectory(t));
    } else if (kind == "auto") {
      out.add(stem + "_pitch.svg", plot_pitch(t));
      out.add(stem + "_cross_track.svg", plot_cross_track(t));
      out.add(stem + "_trajectory.svg", plot_trajectory(t));
    } else {
      throw InputError("unknown plot kind '" + kind + "'");
    }
  } catch (const CsvError& e) {
    throw InputError(csv + ": " + e.what());
  }
  RunManifest m;
  m.subcommand = "plot";
  m.config_paths.push_back(csv);
  // Plots usually land beside the CSV they came from; keep that run's manifest.
  finish(out, m, stem + "_plot_manifest.json");
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Terrace-farming robot: scissor design, simulation and plots"};
  app.require_subcommand(1);
  app.fallthrough();
  std::string dir_flag;
  app.add_option("-o,--out-dir", dir_flag, "Output directory (default $STEPFARM_OUT_DIR, else ./out)");

  auto* design = app.add_subcommand("design", "Run the multi-objective scissor optimisation");
  std::string design_cfg;
  std::optional<std::uint64_t> design_seed;
  std::optional<unsigned> design_threads;
  design->add_option("config", design_cfg, "Design config JSON (defaults: n = 2,3,4, population 200)");
  design->add_option("--seed", design_seed, "Override the GA seed");
  design->add_option("--threads", design_threads, "Fitness threads, 0 = all cores");

  auto* sim = app.add_subcommand("sim", "Run a scenario; the exit code encodes the outcome");
  std::string scenario;
  std::optional<std::uint64_t> sim_seed;
  sim->add_option("scenario", scenario, "Scenario JSON")->required();
  sim->add_option("--seed", sim_seed, "Override the scenario seed");

  auto* eval = app.add_subcommand("eval", "Evaluate the scissor formulas for one configuration");
  EvalArgs ea;
  eval->add_option("config", ea.config, "Scissor config JSON (defaults: the prototype datasheet values)");
  eval->add_option("--a", ea.a, "PA / D");
  eval->add_option("--b", ea.b, "OB / D");
  eval->add_option("--D", ea.D, "Link length [m]");
  eval->add_option("--n", ea.n, "Scissor levels");
  eval->add_option("--i", ea.i, "Levels below the actuator base");
  eval->add_option("--H", ea.H, "Climb height [m]");
  eval->add_option("--load", ea.load, "Lifted load [N]");
  eval->add_option("--theta-min-deg", ea.theta_min_deg, "Closed link angle [deg]");
  eval->add_option("--theta-deg", ea.theta_deg, "Also evaluate h, l, F at this angle [deg]");
  eval->add_option("--theta-max-rule", ea.rule, "climb (arcsin rule) or right (90 deg)")
      ->check(CLI::IsMember({"climb", "right"}));

  auto* plot = app.add_subcommand("plot", "Render SVG plots from a front or trace CSV");
  std::string plot_csv, plot_kind{"auto"};
  plot->add_option("csv", plot_csv, "pareto.csv, datasheet.csv or trace.csv")->required();
  plot->add_option("--kind", plot_kind, "auto, pareto, pitch, cross-track or trajectory")
      ->check(CLI::IsMember({"auto", "pareto", "pitch", "cross-track", "trajectory"}));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitBadInput;
  }

  const std::string dir = out_dir(dir_flag);
  try {
    if (*design) return cmd_design(design_cfg, dir, design_seed, design_threads);
    if (*sim) return cmd_sim(scenario, dir, sim_seed);
    if (*eval) return cmd_eval(ea, dir);
    if (*plot) return cmd_plot(plot_csv, plot_kind, dir);
  } catch (const InputError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitBadInput;
  } catch (const EmptyFrontError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitEmpty;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitBadInput;
  }
  return kExitBadInput;
}
