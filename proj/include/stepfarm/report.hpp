// Output plumbing for the command-line tool: atomic file writes, SHA-256
// manifests, a small CSV reader and deterministic SVG plots.
#pragma once

#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "stepfarm/design_opt.hpp"

namespace stepfarm {

class CsvError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Hex SHA-256 of a byte string.
std::string sha256_hex(const std::string& bytes);

/// Files staged in memory and committed together: each one goes to a temp
/// name beside the target and is renamed into place. Nothing is written until
/// commit(), so a failed run leaves no partial output.
class OutputSet {
 public:
  explicit OutputSet(std::string dir) : dir_(std::move(dir)) {}
  void add(const std::string& name, std::string content);
  const std::map<std::string, std::string>& files() const { return files_; }
  std::map<std::string, std::string> hashes() const;
  /// Returns the full paths written, in name order.
  std::vector<std::string> commit() const;

 private:
  std::string dir_;
  std::map<std::string, std::string> files_;
};

struct RunManifest {
  std::string subcommand;
  std::vector<std::string> config_paths;
  std::uint64_t seed{0};
  std::string tool_version;
  std::map<std::string, std::string> output_hashes;
  nlohmann::json extra = nlohmann::json::object();

  nlohmann::json to_json() const;
};

const char* tool_version();

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  int column(const std::string& name) const;  // -1 if absent
  std::vector<double> numbers(const std::string& name) const;
};

/// Plain comma-separated text with a header row; double-quoted cells may hold commas.
CsvTable parse_csv(const std::string& text);

std::string pareto_csv(const std::vector<ParetoFront>& fronts);

// ---------------------------------------------------------------- SVG

struct Series {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
};

struct PlotSpec {
  std::string title;
  std::string x_label;
  std::string y_label;
  bool lines{true};  // false draws markers only
  bool equal_aspect{false};
  double width{640};
  double height{420};
};

/// Self-contained SVG; identical input gives identical bytes.
std::string render_svg(const std::vector<Series>& series, const PlotSpec& spec);

/// Front scatter with one series per n, from a pareto or datasheet CSV.
std::string plot_pareto(const CsvTable& t);
std::string plot_pitch(const CsvTable& trace);
std::string plot_cross_track(const CsvTable& trace);
std::string plot_trajectory(const CsvTable& trace);

}  // namespace stepfarm
