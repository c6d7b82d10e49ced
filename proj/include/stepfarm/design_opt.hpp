// NSGA-II search over scissor-lift designs minimizing (F_max, S).
#pragma once

#include <cstdint>
#include <iosfwd>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "stepfarm/rng.hpp"
#include "stepfarm/scissor.hpp"

namespace stepfarm {

struct DesignPoint {
  ScissorConfig cfg;
  double f_max{std::numeric_limits<double>::infinity()};
  double stroke{std::numeric_limits<double>::infinity()};
  bool feasible{false};
  std::string reason;  // empty when feasible
  int rank{0};
  double crowding{0.0};
};

struct GaSettings {
  int population_size{200};
  int generations{150};
  double pareto_fraction{0.7};
  double crossover_rate{0.9};
  double mutation_rate{0.25};  // per variable; four variables
  double eta_c{15.0};
  double eta_m{20.0};
  std::uint64_t seed{1};
  int stagnation_window{30};  // 0 disables the early stop
  double stagnation_tol{1e-6};
  unsigned threads{1};  // 0 = hardware concurrency

  void validate() const;
};

/// Problem constants and the search box for one value of n.
struct DesignProblem {
  int n{2};
  double L_load{250.0};
  double H{0.4};
  double f_cap{1000.0};
  double ab_lo{1e-3};
  double ab_hi{0.5};
  double theta_lo{deg2rad(5.0)};
  double theta_hi{deg2rad(10.0)};
  double D_lo() const { return d_min(H, n, theta_lo); }
  double D_hi() const { return H; }

  ScissorConfig config(double a, double b, double theta_min, double D) const;
  bool in_box(const ScissorConfig& c) const;
};

struct ParetoFront {
  std::vector<DesignPoint> points;
  int n_value{0};
};

struct RunResult {
  ParetoFront front;
  std::vector<double> hv_history;  // archive hypervolume after each generation
  int generations_run{0};
  long evaluations{0};
};

class EmptyFrontError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

DesignPoint evaluate(const ScissorConfig& cfg, const DesignProblem& problem);
inline DesignPoint evaluate(const ScissorConfig& cfg) {
  DesignProblem p;
  p.n = cfg.n;
  p.L_load = cfg.L_load;
  p.H = cfg.H;
  return evaluate(cfg, p);
}

/// p dominates q iff it is no worse in both objectives and better in one.
inline bool dominates(double f1, double s1, double f2, double s2) {
  return f1 <= f2 && s1 <= s2 && (f1 < f2 || s1 < s2);
}

/// Objective matrix rows are (F_max, S). Returns fronts of row indices, best first.
std::vector<std::vector<int>> non_dominated_sort(const Eigen::Ref<const Eigen::MatrixX2d>& obj);
std::vector<std::vector<int>> non_dominated_sort(std::vector<DesignPoint>& points);

/// Crowding distance of each row of a single front; boundary rows get +inf.
Eigen::VectorXd crowding_distance(const Eigen::Ref<const Eigen::MatrixX2d>& obj);
void crowding_distance(std::vector<DesignPoint>& front);

std::pair<ScissorConfig, ScissorConfig> variation(const ScissorConfig& p1, const ScissorConfig& p2,
                                                  const GaSettings& settings, const DesignProblem& problem, Rng& rng);

RunResult run_detailed(const DesignProblem& problem, const GaSettings& settings);
inline ParetoFront run(const DesignProblem& problem, const GaSettings& settings) {
  return run_detailed(problem, settings).front;
}

/// Exhaustive evaluation on a resolution^4 lattice over the (a, b, theta_min, D) box.
ParetoFront grid_oracle(const DesignProblem& problem, int resolution);

/// Mutually non-dominated subset, sorted by (f_max, stroke). Duplicates collapse to one.
std::vector<DesignPoint> pareto_filter(std::vector<DesignPoint> points);

double hypervolume(const std::vector<DesignPoint>& points, double ref_f = 1000.0, double ref_s = 0.4);
inline double hypervolume(const ParetoFront& front, double ref_f = 1000.0, double ref_s = 0.4) {
  return hypervolume(front.points, ref_f, ref_s);
}

struct DatasheetOptions {
  double thickness_mm{3.0};
  bool header{true};
};

void export_datasheet(std::ostream& out, const std::vector<ParetoFront>& fronts, const DatasheetOptions& opt = {});
std::vector<ParetoFront> read_datasheet(std::istream& in);

extern const char* const kDatasheetHeader;

}  // namespace stepfarm
