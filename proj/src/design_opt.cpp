#include "stepfarm/design_opt.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <istream>
#include <map>
#include <numeric>
#include <ostream>
#include <sstream>
#include <thread>

namespace stepfarm {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

struct Genome {
  double x[4];  // a, b, theta_min, D
};

Genome to_genome(const ScissorConfig& c) { return {{c.a, c.b, c.theta_min, c.D}}; }

void bounds(const DesignProblem& p, double lo[4], double hi[4]) {
  lo[0] = p.ab_lo;
  hi[0] = p.ab_hi;
  lo[1] = p.ab_lo;
  hi[1] = p.ab_hi;
  lo[2] = p.theta_lo;
  hi[2] = p.theta_hi;
  lo[3] = p.D_lo();
  hi[3] = p.D_hi();
}

bool better(const DesignPoint& p, const DesignPoint& q) {
  if (p.rank != q.rank) return p.rank < q.rank;
  return p.crowding > q.crowding;
}

bool lex_less(const DesignPoint& p, const DesignPoint& q) {
  if (p.f_max != q.f_max) return p.f_max < q.f_max;
  return p.stroke < q.stroke;
}

Eigen::MatrixX2d objectives(const std::vector<DesignPoint>& pts) {
  Eigen::MatrixX2d m(static_cast<Eigen::Index>(pts.size()), 2);
  for (std::size_t k = 0; k < pts.size(); ++k) {
    m(static_cast<Eigen::Index>(k), 0) = pts[k].f_max;
    m(static_cast<Eigen::Index>(k), 1) = pts[k].stroke;
  }
  return m;
}

// Objective values the GA ranks on; geometry errors sink to the last front.
void ga_objectives(DesignPoint& p) {
  if (!p.reason.empty() && (p.reason.rfind("geometry", 0) == 0)) {
    p.f_max = kInf;
    p.stroke = kInf;
  }
}

void evaluate_all(std::vector<DesignPoint>& pts, const DesignProblem& problem, unsigned threads) {
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  const std::size_t n = pts.size();
  auto work = [&](std::size_t begin, std::size_t end) {
    for (std::size_t k = begin; k < end; ++k) {
      pts[k] = evaluate(pts[k].cfg, problem);
      ga_objectives(pts[k]);
    }
  };
  if (threads == 1 || n < 2 * threads) {
    work(0, n);
    return;
  }
  // Each worker writes a disjoint index range, so the result does not depend
  // on scheduling.
  std::vector<std::thread> pool;
  const std::size_t chunk = (n + threads - 1) / threads;
  for (std::size_t begin = 0; begin < n; begin += chunk) {
    pool.emplace_back(work, begin, std::min(n, begin + chunk));
  }
  for (auto& t : pool) t.join();
}

// Unbounded archive of feasible non-dominated points, kept sorted by f_max.
class Archive {
 public:
  void insert(const DesignPoint& p) {
    if (!p.feasible) return;
    for (const auto& q : pts_) {
      if (dominates(q.f_max, q.stroke, p.f_max, p.stroke) || (q.f_max == p.f_max && q.stroke == p.stroke)) return;
    }
    std::erase_if(pts_, [&](const DesignPoint& q) { return dominates(p.f_max, p.stroke, q.f_max, q.stroke); });
    pts_.insert(std::lower_bound(pts_.begin(), pts_.end(), p, lex_less), p);
  }
  const std::vector<DesignPoint>& points() const { return pts_; }

 private:
  std::vector<DesignPoint> pts_;
};

std::vector<DesignPoint> truncate_by_crowding(std::vector<DesignPoint> pts, std::size_t keep) {
  while (pts.size() > keep) {
    Eigen::VectorXd cd = crowding_distance(objectives(pts));
    Eigen::Index worst = 0;
    cd.minCoeff(&worst);
    pts.erase(pts.begin() + worst);
  }
  return pts;
}

}  // namespace

void GaSettings::validate() const {
  if (population_size < 4 || population_size % 2 != 0) {
    throw std::invalid_argument("population size must be even and at least 4");
  }
  if (generations < 0) throw std::invalid_argument("generations must be non-negative");
  if (!(pareto_fraction > 0.0 && pareto_fraction <= 1.0)) throw std::invalid_argument("pareto fraction must lie in (0, 1]");
  if (!(crossover_rate >= 0.0 && crossover_rate <= 1.0)) throw std::invalid_argument("crossover rate must lie in [0, 1]");
  if (!(mutation_rate >= 0.0 && mutation_rate <= 1.0)) throw std::invalid_argument("mutation rate must lie in [0, 1]");
  if (!(eta_c >= 0.0 && eta_m >= 0.0)) throw std::invalid_argument("distribution indices must be non-negative");
}

ScissorConfig DesignProblem::config(double a, double b, double theta_min, double D) const {
  ScissorConfig c;
  c.a = a;
  c.b = b;
  c.theta_min = theta_min;
  c.n = n;
  c.D = D;
  c.i = n - 1;
  c.L_load = L_load;
  c.H = H;
  return c;
}

bool DesignProblem::in_box(const ScissorConfig& c) const {
  // The limits are inclusive, so a small slack absorbs round-off from decimal
  // inputs such as 10 degrees typed at the command line.
  constexpr double eps = 1e-12;
  return c.n == n && c.i == n - 1 && c.a > 0.0 && c.a <= ab_hi + eps && c.b > 0.0 && c.b <= ab_hi + eps &&
         c.theta_min >= theta_lo - eps && c.theta_min <= theta_hi + eps && c.D >= D_lo() * (1 - eps) &&
         c.D <= D_hi() * (1 + eps);
}

DesignPoint evaluate(const ScissorConfig& cfg, const DesignProblem& problem) {
  DesignPoint p;
  p.cfg = cfg;
  try {
    check_geometry(cfg);
    p.f_max = f_max(cfg);
    p.stroke = stroke(cfg);
  } catch (const ScissorError& e) {
    p.reason = std::string("geometry: ") + e.what();
    return p;
  }
  if (!problem.in_box(cfg)) {
    p.reason = "outside design box";
  } else if (p.f_max > problem.f_cap) {
    p.reason = "force cap";
  } else if (p.stroke > cfg.H) {
    p.reason = "stroke cap";
  } else {
    p.feasible = true;
  }
  return p;
}

std::vector<std::vector<int>> non_dominated_sort(const Eigen::Ref<const Eigen::MatrixX2d>& obj) {
  const int n = static_cast<int>(obj.rows());
  std::vector<std::vector<int>> dominated_by_me(n);
  std::vector<int> count(n, 0);
  std::vector<std::vector<int>> fronts(1);
  for (int p = 0; p < n; ++p) {
    for (int q = p + 1; q < n; ++q) {
      if (dominates(obj(p, 0), obj(p, 1), obj(q, 0), obj(q, 1))) {
        dominated_by_me[p].push_back(q);
        ++count[q];
      } else if (dominates(obj(q, 0), obj(q, 1), obj(p, 0), obj(p, 1))) {
        dominated_by_me[q].push_back(p);
        ++count[p];
      }
    }
  }
  for (int p = 0; p < n; ++p) {
    if (count[p] == 0) fronts[0].push_back(p);
  }
  for (std::size_t k = 0; !fronts[k].empty(); ++k) {
    std::vector<int> next;
    for (int p : fronts[k]) {
      for (int q : dominated_by_me[p]) {
        if (--count[q] == 0) next.push_back(q);
      }
    }
    std::sort(next.begin(), next.end());
    fronts.push_back(std::move(next));
  }
  fronts.pop_back();
  return fronts;
}

std::vector<std::vector<int>> non_dominated_sort(std::vector<DesignPoint>& points) {
  auto fronts = non_dominated_sort(objectives(points));
  for (std::size_t r = 0; r < fronts.size(); ++r) {
    for (int k : fronts[r]) points[k].rank = static_cast<int>(r);
  }
  return fronts;
}

Eigen::VectorXd crowding_distance(const Eigen::Ref<const Eigen::MatrixX2d>& obj) {
  const Eigen::Index n = obj.rows();
  Eigen::VectorXd cd = Eigen::VectorXd::Zero(n);
  if (n <= 2) {
    cd.setConstant(kInf);
    return cd;
  }
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  for (int m = 0; m < 2; ++m) {
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    std::stable_sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) { return obj(a, m) < obj(b, m); });
    cd(order.front()) = kInf;
    cd(order.back()) = kInf;
    const double range = obj(order.back(), m) - obj(order.front(), m);
    if (!(range > 0.0) || !std::isfinite(range)) continue;
    for (std::size_t k = 1; k + 1 < order.size(); ++k) {
      cd(order[k]) += (obj(order[k + 1], m) - obj(order[k - 1], m)) / range;
    }
  }
  return cd;
}

void crowding_distance(std::vector<DesignPoint>& front) {
  const Eigen::VectorXd cd = crowding_distance(objectives(front));
  for (std::size_t k = 0; k < front.size(); ++k) front[k].crowding = cd(static_cast<Eigen::Index>(k));
}

std::pair<ScissorConfig, ScissorConfig> variation(const ScissorConfig& p1, const ScissorConfig& p2,
                                                  const GaSettings& s, const DesignProblem& problem, Rng& rng) {
  double lo[4], hi[4];
  bounds(problem, lo, hi);
  Genome c1 = to_genome(p1);
  Genome c2 = to_genome(p2);

  // Simulated binary crossover, bounded form.
  if (rng.uniform() < s.crossover_rate) {
    for (int v = 0; v < 4; ++v) {
      if (rng.uniform() > 0.5) continue;
      double y1 = std::min(c1.x[v], c2.x[v]);
      double y2 = std::max(c1.x[v], c2.x[v]);
      if (y2 - y1 < 1e-14) continue;
      const double u = rng.uniform();
      auto spread = [&](double beta) {
        const double alpha = 2.0 - std::pow(beta, -(s.eta_c + 1.0));
        const double bq = u <= 1.0 / alpha ? std::pow(u * alpha, 1.0 / (s.eta_c + 1.0))
                                           : std::pow(1.0 / (2.0 - u * alpha), 1.0 / (s.eta_c + 1.0));
        return bq;
      };
      const double bq1 = spread(1.0 + 2.0 * (y1 - lo[v]) / (y2 - y1));
      const double bq2 = spread(1.0 + 2.0 * (hi[v] - y2) / (y2 - y1));
      double n1 = 0.5 * ((y1 + y2) - bq1 * (y2 - y1));
      double n2 = 0.5 * ((y1 + y2) + bq2 * (y2 - y1));
      if (rng.uniform() < 0.5) std::swap(n1, n2);
      c1.x[v] = n1;
      c2.x[v] = n2;
    }
  }

  // Polynomial mutation, bounded form.
  for (Genome* g : {&c1, &c2}) {
    for (int v = 0; v < 4; ++v) {
      if (!(rng.uniform() < s.mutation_rate)) continue;
      const double range = hi[v] - lo[v];
      const double y = g->x[v];
      const double d1 = (y - lo[v]) / range;
      const double d2 = (hi[v] - y) / range;
      const double u = rng.uniform();
      const double pw = 1.0 / (s.eta_m + 1.0);
      double dq;
      if (u < 0.5) {
        const double val = 2.0 * u + (1.0 - 2.0 * u) * std::pow(1.0 - d1, s.eta_m + 1.0);
        dq = std::pow(val, pw) - 1.0;
      } else {
        const double val = 2.0 * (1.0 - u) + 2.0 * (u - 0.5) * std::pow(1.0 - d2, s.eta_m + 1.0);
        dq = 1.0 - std::pow(val, pw);
      }
      g->x[v] = y + dq * range;
    }
  }

  auto finish = [&](const Genome& g, const ScissorConfig& like) {
    ScissorConfig c = like;
    double x[4];
    for (int v = 0; v < 4; ++v) x[v] = std::clamp(g.x[v], lo[v], hi[v]);
    c.a = x[0];
    c.b = x[1];
    c.theta_min = x[2];
    c.D = x[3];
    return c;
  };
  return {finish(c1, p1), finish(c2, p2)};
}

RunResult run_detailed(const DesignProblem& problem, const GaSettings& s) {
  s.validate();
  if (problem.n < 2) throw std::invalid_argument("n must be at least 2");
  Rng rng(s.seed);
  double lo[4], hi[4];
  bounds(problem, lo, hi);
  const std::size_t N = static_cast<std::size_t>(s.population_size);

  RunResult result;
  Archive archive;

  std::vector<DesignPoint> pop(N);
  for (auto& p : pop) {
    p.cfg = problem.config(rng.uniform(lo[0], hi[0]), rng.uniform(lo[1], hi[1]), rng.uniform(lo[2], hi[2]),
                           rng.uniform(lo[3], hi[3]));
  }
  evaluate_all(pop, problem, s.threads);
  result.evaluations += static_cast<long>(N);
  for (const auto& p : pop) archive.insert(p);
  auto fronts = non_dominated_sort(pop);
  for (const auto& f : fronts) {
    std::vector<DesignPoint> members;
    for (int k : f) members.push_back(pop[k]);
    crowding_distance(members);
    for (std::size_t m = 0; m < f.size(); ++m) pop[f[m]].crowding = members[m].crowding;
  }
  result.hv_history.push_back(hypervolume(archive.points(), problem.f_cap, problem.H));

  int stagnant = 0;
  for (int gen = 0; gen < s.generations; ++gen) {
    auto tournament = [&]() -> const DesignPoint& {
      const DesignPoint& x = pop[rng.index(N)];
      const DesignPoint& y = pop[rng.index(N)];
      return better(y, x) ? y : x;
    };
    std::vector<DesignPoint> offspring;
    offspring.reserve(N);
    while (offspring.size() < N) {
      const auto& pa = tournament();
      const auto& pb = tournament();
      auto [k1, k2] = variation(pa.cfg, pb.cfg, s, problem, rng);
      offspring.emplace_back().cfg = k1;
      offspring.emplace_back().cfg = k2;
    }
    evaluate_all(offspring, problem, s.threads);
    result.evaluations += static_cast<long>(N);
    for (const auto& p : offspring) archive.insert(p);

    std::vector<DesignPoint> merged = std::move(pop);
    merged.insert(merged.end(), offspring.begin(), offspring.end());
    fronts = non_dominated_sort(merged);
    pop.clear();
    for (const auto& f : fronts) {
      std::vector<DesignPoint> members;
      for (int k : f) members.push_back(merged[k]);
      crowding_distance(members);
      if (pop.size() + members.size() <= N) {
        pop.insert(pop.end(), members.begin(), members.end());
        continue;
      }
      std::stable_sort(members.begin(), members.end(),
                       [](const DesignPoint& x, const DesignPoint& y) { return x.crowding > y.crowding; });
      members.resize(N - pop.size());
      pop.insert(pop.end(), members.begin(), members.end());
      break;
    }

    const double hv = hypervolume(archive.points(), problem.f_cap, problem.H);
    stagnant = hv - result.hv_history.back() > s.stagnation_tol ? 0 : stagnant + 1;
    result.hv_history.push_back(hv);
    result.generations_run = gen + 1;
    if (s.stagnation_window > 0 && stagnant >= s.stagnation_window) break;
  }

  if (archive.points().empty()) {
    throw EmptyFrontError("no feasible design found for n = " + std::to_string(problem.n));
  }
  const auto keep = static_cast<std::size_t>(std::max(1.0, std::floor(s.pareto_fraction * static_cast<double>(N))));
  result.front.n_value = problem.n;
  result.front.points = truncate_by_crowding(archive.points(), keep);
  for (auto& p : result.front.points) p.rank = 0;
  crowding_distance(result.front.points);
  return result;
}

std::vector<DesignPoint> pareto_filter(std::vector<DesignPoint> points) {
  std::sort(points.begin(), points.end(), lex_less);
  std::vector<DesignPoint> out;
  double best_s = kInf;
  for (auto& p : points) {
    if (p.stroke < best_s) {
      best_s = p.stroke;
      p.rank = 0;
      out.push_back(std::move(p));
    }
  }
  return out;
}

ParetoFront grid_oracle(const DesignProblem& problem, int resolution) {
  if (resolution < 2) throw std::invalid_argument("grid resolution must be at least 2");
  double lo[4], hi[4];
  bounds(problem, lo, hi);
  auto axis = [&](int v, int k) { return lo[v] + (hi[v] - lo[v]) * k / (resolution - 1); };
  std::vector<DesignPoint> feasible;
  for (int ia = 0; ia < resolution; ++ia) {
    for (int ib = 0; ib < resolution; ++ib) {
      for (int it = 0; it < resolution; ++it) {
        for (int id = 0; id < resolution; ++id) {
          auto p = evaluate(problem.config(axis(0, ia), axis(1, ib), axis(2, it), axis(3, id)), problem);
          if (p.feasible) feasible.push_back(std::move(p));
        }
      }
    }
    feasible = pareto_filter(std::move(feasible));  // keeps memory flat
  }
  ParetoFront front;
  front.n_value = problem.n;
  front.points = pareto_filter(std::move(feasible));
  crowding_distance(front.points);
  return front;
}

double hypervolume(const std::vector<DesignPoint>& points, double ref_f, double ref_s) {
  for (const auto& p : points) {
    if (!(p.f_max <= ref_f && p.stroke <= ref_s)) {
      throw std::domain_error("hypervolume: point does not dominate the reference");
    }
  }
  std::vector<std::pair<double, double>> pts;
  pts.reserve(points.size());
  for (const auto& p : points) pts.emplace_back(p.f_max, p.stroke);
  std::sort(pts.begin(), pts.end());
  double hv = 0.0;
  double prev_s = ref_s;
  for (const auto& [f, s] : pts) {
    if (s < prev_s) {
      hv += (ref_f - f) * (prev_s - s);
      prev_s = s;
    }
  }
  return hv;
}

const char* const kDatasheetHeader = "n,a,b,theta_min_deg,D_m,i,F_max_N,S_m,t_mm";

void export_datasheet(std::ostream& out, const std::vector<ParetoFront>& fronts, const DatasheetOptions& opt) {
  bool any = false;
  for (const auto& f : fronts) any = any || !f.points.empty();
  if (!any) throw EmptyFrontError("datasheet export needs a non-empty front");
  std::ostringstream os;
  os << std::setprecision(10);
  if (opt.header) os << kDatasheetHeader << '\n';
  for (const auto& f : fronts) {
    for (const auto& p : f.points) {
      os << p.cfg.n << ',' << p.cfg.a << ',' << p.cfg.b << ',' << rad2deg(p.cfg.theta_min) << ',' << p.cfg.D << ','
         << p.cfg.i << ',' << p.f_max << ',' << p.stroke << ',' << opt.thickness_mm << '\n';
    }
  }
  out << os.str();
  if (!out) throw std::ios_base::failure("datasheet write failed");
}

std::vector<ParetoFront> read_datasheet(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != kDatasheetHeader) {
    throw std::invalid_argument("datasheet: missing or unexpected header");
  }
  std::map<int, ParetoFront> by_n;
  std::vector<int> order;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::vector<double> v;
    std::string cell;
    while (std::getline(ls, cell, ',')) {
      std::size_t used = 0;
      double x = 0.0;
      try {
        x = std::stod(cell, &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used != cell.size() || cell.empty()) {
        throw std::invalid_argument("datasheet: bad number on line " + std::to_string(lineno));
      }
      v.push_back(x);
    }
    if (v.size() != 9) throw std::invalid_argument("datasheet: expected 9 columns on line " + std::to_string(lineno));
    DesignPoint p;
    p.cfg.n = static_cast<int>(v[0]);
    p.cfg.a = v[1];
    p.cfg.b = v[2];
    p.cfg.theta_min = deg2rad(v[3]);
    p.cfg.D = v[4];
    p.cfg.i = static_cast<int>(v[5]);
    p.f_max = v[6];
    p.stroke = v[7];
    p.feasible = true;
    if (!by_n.count(p.cfg.n)) order.push_back(p.cfg.n);
    auto& f = by_n[p.cfg.n];
    f.n_value = p.cfg.n;
    f.points.push_back(p);
  }
  std::vector<ParetoFront> out;
  for (int n : order) out.push_back(std::move(by_n[n]));
  return out;
}

}  // namespace stepfarm
