#include "stepfarm/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>

#include <openssl/evp.h>

#include "stepfarm/sim.hpp"

namespace stepfarm {

namespace fs = std::filesystem;

std::string sha256_hex(const std::string& bytes) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha256(), nullptr) != 1) {
    throw std::runtime_error("SHA-256 digest failed");
  }
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out += hex[md[i] >> 4];
    out += hex[md[i] & 0xf];
  }
  return out;
}

void OutputSet::add(const std::string& name, std::string content) { files_[name] = std::move(content); }

std::map<std::string, std::string> OutputSet::hashes() const {
  std::map<std::string, std::string> h;
  for (const auto& [name, content] : files_) h[name] = sha256_hex(content);
  return h;
}

std::vector<std::string> OutputSet::commit() const {
  fs::create_directories(dir_);
  std::vector<std::pair<fs::path, fs::path>> staged;
  try {
    for (const auto& [name, content] : files_) {
      const fs::path target = fs::path(dir_) / name;
      const fs::path tmp = fs::path(dir_) / ("." + name + ".tmp");
      std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
      out << content;
      out.close();
      if (!out) throw std::runtime_error("cannot write " + tmp.string());
      staged.emplace_back(tmp, target);
    }
  } catch (...) {
    for (const auto& [tmp, target] : staged) fs::remove(tmp);
    throw;
  }
  std::vector<std::string> written;
  for (const auto& [tmp, target] : staged) {
    fs::rename(tmp, target);
    written.push_back(target.string());
  }
  return written;
}

const char* tool_version() { return "stepfarm 0.1.0"; }

nlohmann::json RunManifest::to_json() const {
  nlohmann::json j;
  j["subcommand"] = subcommand;
  j["config_paths"] = config_paths;
  j["seed"] = seed;
  j["tool_version"] = tool_version;
  j["outputs"] = output_hashes;
  if (!extra.empty()) j["run"] = extra;
  return j;
}

// ---------------------------------------------------------------- CSV

int CsvTable::column(const std::string& name) const {
  const auto it = std::find(header.begin(), header.end(), name);
  return it == header.end() ? -1 : static_cast<int>(it - header.begin());
}

std::vector<double> CsvTable::numbers(const std::string& name) const {
  const int c = column(name);
  if (c < 0) throw CsvError("missing column '" + name + "'");
  std::vector<double> v;
  v.reserve(rows.size());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const std::string& cell = rows[r][static_cast<std::size_t>(c)];
    if (cell == "inf") {
      v.push_back(std::numeric_limits<double>::infinity());
      continue;
    }
    if (cell == "-inf") {
      v.push_back(-std::numeric_limits<double>::infinity());
      continue;
    }
    if (cell == "nan") {
      v.push_back(std::numeric_limits<double>::quiet_NaN());
      continue;
    }
    std::size_t used = 0;
    double x = 0;
    try {
      x = std::stod(cell, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != cell.size()) {
      throw CsvError("row " + std::to_string(r + 2) + ": '" + cell + "' in column " + name + " is not a number");
    }
    v.push_back(x);
  }
  return v;
}

namespace {

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char ch = line[i];
    if (quoted) {
      if (ch == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur += '"';
        ++i;
      } else if (ch == '"') {
        quoted = false;
      } else {
        cur += ch;
      }
    } else if (ch == '"') {
      quoted = true;
    } else if (ch == ',') {
      cells.push_back(cur);
      cur.clear();
    } else {
      cur += ch;
    }
  }
  if (quoted) throw CsvError("unterminated quote");
  cells.push_back(cur);
  return cells;
}

}  // namespace

CsvTable parse_csv(const std::string& text) {
  CsvTable t;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto cells = split_line(line);
    if (t.header.empty()) {
      t.header = std::move(cells);
      continue;
    }
    if (cells.size() != t.header.size()) {
      throw CsvError("line " + std::to_string(lineno) + " has " + std::to_string(cells.size()) + " cells, header has " +
                     std::to_string(t.header.size()));
    }
    t.rows.push_back(std::move(cells));
  }
  if (t.header.empty()) throw CsvError("empty CSV");
  return t;
}

std::string pareto_csv(const std::vector<ParetoFront>& fronts) {
  std::ostringstream os;
  os << "n,a,b,theta_min_deg,D,f_max,stroke\n";
  for (const auto& f : fronts) {
    for (const auto& p : f.points) {
      os << p.cfg.n << ',' << format_number(p.cfg.a) << ',' << format_number(p.cfg.b) << ','
         << format_number(rad2deg(p.cfg.theta_min)) << ',' << format_number(p.cfg.D) << ','
         << format_number(p.f_max) << ',' << format_number(p.stroke) << '\n';
    }
  }
  return os.str();
}

// ---------------------------------------------------------------- SVG

namespace {

std::string num(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", x);
  return buf;
}

std::string tick_label(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", std::abs(x) < 1e-12 ? 0.0 : x);
  return buf;
}

std::string escape(const std::string& s) {
  std::string o;
  for (char c : s) {
    switch (c) {
      case '&': o += "&amp;"; break;
      case '<': o += "&lt;"; break;
      case '>': o += "&gt;"; break;
      case '"': o += "&quot;"; break;
      default: o += c;
    }
  }
  return o;
}

double nice_step(double span, int target) {
  const double raw = span / target;
  const double mag = std::pow(10.0, std::floor(std::log10(raw)));
  const double f = raw / mag;
  return (f < 1.5 ? 1.0 : f < 3.0 ? 2.0 : f < 7.0 ? 5.0 : 10.0) * mag;
}

const char* kColours[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};

}  // namespace

std::string render_svg(const std::vector<Series>& series, const PlotSpec& spec) {
  double x0 = std::numeric_limits<double>::infinity(), x1 = -x0, y0 = x0, y1 = -x0;
  for (const auto& s : series) {
    for (std::size_t i = 0; i < s.x.size() && i < s.y.size(); ++i) {
      if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
      x0 = std::min(x0, s.x[i]);
      x1 = std::max(x1, s.x[i]);
      y0 = std::min(y0, s.y[i]);
      y1 = std::max(y1, s.y[i]);
    }
  }
  if (!std::isfinite(x0)) throw CsvError("nothing to plot");
  if (x1 - x0 < 1e-12) x0 -= 0.5, x1 += 0.5;
  if (y1 - y0 < 1e-12) y0 -= 0.5, y1 += 0.5;

  const double ml = 70, mr = 20, mt = 36, mb = 50;
  const double pw = spec.width - ml - mr, ph = spec.height - mt - mb;
  if (spec.equal_aspect) {
    const double sx = (x1 - x0) / pw, sy = (y1 - y0) / ph;
    if (sx > sy) {
      const double c = 0.5 * (y0 + y1), h = 0.5 * sx * ph;
      y0 = c - h;
      y1 = c + h;
    } else {
      const double c = 0.5 * (x0 + x1), h = 0.5 * sy * pw;
      x0 = c - h;
      x1 = c + h;
    }
  }
  auto X = [&](double x) { return ml + (x - x0) / (x1 - x0) * pw; };
  auto Y = [&](double y) { return mt + (1.0 - (y - y0) / (y1 - y0)) * ph; };

  std::ostringstream o;
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << num(spec.width) << "\" height=\"" << num(spec.height)
    << "\" viewBox=\"0 0 " << num(spec.width) << ' ' << num(spec.height) << "\" font-family=\"sans-serif\" "
    << "font-size=\"11\">\n";
  o << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  o << "<text x=\"" << num(spec.width / 2) << "\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">"
    << escape(spec.title) << "</text>\n";

  const double xs = nice_step(x1 - x0, 6), ys = nice_step(y1 - y0, 6);
  for (double v = std::ceil(x0 / xs) * xs; v <= x1 + 1e-9 * xs; v += xs) {
    o << "<line x1=\"" << num(X(v)) << "\" y1=\"" << num(mt) << "\" x2=\"" << num(X(v)) << "\" y2=\"" << num(mt + ph)
      << "\" stroke=\"#e0e0e0\"/>\n";
    o << "<text x=\"" << num(X(v)) << "\" y=\"" << num(mt + ph + 16) << "\" text-anchor=\"middle\">" << tick_label(v)
      << "</text>\n";
  }
  for (double v = std::ceil(y0 / ys) * ys; v <= y1 + 1e-9 * ys; v += ys) {
    o << "<line x1=\"" << num(ml) << "\" y1=\"" << num(Y(v)) << "\" x2=\"" << num(ml + pw) << "\" y2=\"" << num(Y(v))
      << "\" stroke=\"#e0e0e0\"/>\n";
    o << "<text x=\"" << num(ml - 6) << "\" y=\"" << num(Y(v) + 4) << "\" text-anchor=\"end\">" << tick_label(v)
      << "</text>\n";
  }
  o << "<rect x=\"" << num(ml) << "\" y=\"" << num(mt) << "\" width=\"" << num(pw) << "\" height=\"" << num(ph)
    << "\" fill=\"none\" stroke=\"black\"/>\n";
  o << "<text x=\"" << num(ml + pw / 2) << "\" y=\"" << num(spec.height - 10) << "\" text-anchor=\"middle\">"
    << escape(spec.x_label) << "</text>\n";
  o << "<text transform=\"translate(16 " << num(mt + ph / 2) << ") rotate(-90)\" text-anchor=\"middle\">"
    << escape(spec.y_label) << "</text>\n";

  for (std::size_t k = 0; k < series.size(); ++k) {
    const auto& s = series[k];
    const char* col = kColours[k % (sizeof kColours / sizeof *kColours)];
    if (spec.lines) {
      o << "<polyline fill=\"none\" stroke=\"" << col << "\" stroke-width=\"1.2\" points=\"";
      bool first = true;
      for (std::size_t i = 0; i < s.x.size() && i < s.y.size(); ++i) {
        if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
        o << (first ? "" : " ") << num(X(s.x[i])) << ',' << num(Y(s.y[i]));
        first = false;
      }
      o << "\"/>\n";
    } else {
      for (std::size_t i = 0; i < s.x.size() && i < s.y.size(); ++i) {
        if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
        o << "<circle cx=\"" << num(X(s.x[i])) << "\" cy=\"" << num(Y(s.y[i])) << "\" r=\"2.5\" fill=\"" << col
          << "\"/>\n";
      }
    }
    if (!s.label.empty()) {
      const double ly = mt + 14 + 16 * static_cast<double>(k);
      o << "<rect x=\"" << num(ml + pw - 120) << "\" y=\"" << num(ly - 8) << "\" width=\"10\" height=\"10\" fill=\""
        << col << "\"/>\n";
      o << "<text x=\"" << num(ml + pw - 104) << "\" y=\"" << num(ly + 1) << "\">" << escape(s.label) << "</text>\n";
    }
  }
  o << "</svg>\n";
  return o.str();
}

namespace {

std::vector<double> decimate(const std::vector<double>& v, std::size_t every) {
  if (every <= 1) return v;
  std::vector<double> o;
  for (std::size_t i = 0; i < v.size(); i += every) o.push_back(v[i]);
  if (!v.empty() && (v.size() - 1) % every != 0) o.push_back(v.back());
  return o;
}

std::size_t stride(const CsvTable& t) { return std::max<std::size_t>(1, t.rows.size() / 4000); }

void require_rows(const CsvTable& t) {
  if (t.rows.empty()) throw CsvError("CSV has a header but no rows");
}

}  // namespace

std::string plot_pareto(const CsvTable& t) {
  require_rows(t);
  const bool datasheet = t.column("F_max_N") >= 0;
  const auto n = t.numbers("n");
  const auto f = t.numbers(datasheet ? "F_max_N" : "f_max");
  const auto s = t.numbers(datasheet ? "S_m" : "stroke");
  std::map<int, Series> by_n;
  for (std::size_t i = 0; i < n.size(); ++i) {
    auto& ser = by_n[static_cast<int>(n[i])];
    ser.label = "n = " + std::to_string(static_cast<int>(n[i]));
    ser.x.push_back(f[i]);
    ser.y.push_back(s[i]);
  }
  std::vector<Series> all;
  for (auto& [k, v] : by_n) all.push_back(std::move(v));
  PlotSpec spec;
  spec.title = "Pareto fronts";
  spec.x_label = "F_max [N]";
  spec.y_label = "stroke S [m]";
  spec.lines = false;
  return render_svg(all, spec);
}

std::string plot_pitch(const CsvTable& trace) {
  require_rows(trace);
  const std::size_t k = stride(trace);
  std::vector<double> deg;
  for (double p : trace.numbers("pitch")) deg.push_back(p * 180.0 / 3.141592653589793);
  Series s{"pitch", decimate(trace.numbers("t"), k), decimate(deg, k)};
  PlotSpec spec;
  spec.title = "Chassis pitch";
  spec.x_label = "t [s]";
  spec.y_label = "pitch [deg]";
  return render_svg({s}, spec);
}

std::string plot_cross_track(const CsvTable& trace) {
  require_rows(trace);
  const std::size_t k = stride(trace);
  Series s{"cross-track", decimate(trace.numbers("t"), k), decimate(trace.numbers("cross_track"), k)};
  PlotSpec spec;
  spec.title = "Cross-track error";
  spec.x_label = "t [s]";
  spec.y_label = "e [m]";
  return render_svg({s}, spec);
}

std::string plot_trajectory(const CsvTable& trace) {
  require_rows(trace);
  const std::size_t k = stride(trace);
  Series truth{"true", decimate(trace.numbers("x"), k), decimate(trace.numbers("y"), k)};
  Series est{"estimate", decimate(trace.numbers("est_x"), k), decimate(trace.numbers("est_y"), k)};
  PlotSpec spec;
  spec.title = "Trajectory, overhead";
  spec.x_label = "x [m]";
  spec.y_label = "y [m]";
  spec.equal_aspect = true;
  spec.height = 640;
  return render_svg({truth, est}, spec);
}

}  // namespace stepfarm
