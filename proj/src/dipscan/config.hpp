#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "dipscan/forward_sim.hpp"
#include "dipscan/linalg.hpp"

namespace dipscan::cfg {

/// One `key = value` line.
struct Entry {
  std::string key;
  std::string value;
  int line = 0;  // 0 for overrides
};

struct Section {
  std::string name;
  int line = 0;
  std::vector<Entry> entries;
};

/// Parsed config text: keys before the first `[section]` header are global;
/// each section holds the keys for the experiment of the same name.
struct ConfigFile {
  std::string source;    // file name used in diagnostics
  std::string base_dir;  // relative paths in the file resolve against this
  std::vector<Entry> globals;
  std::vector<Section> sections;
};

/// Throws kConfig with "source:line: ..." diagnostics.
ConfigFile parse_config(const std::string& text, const std::string& source = "<config>",
                        const std::string& base_dir = "");
/// Throws kIo when the file cannot be read.
ConfigFile load_config(const std::string& path);

enum class ReportFormat { kCsv, kJson, kBoth };
const char* format_name(ReportFormat f);

/// Fully resolved settings for one experiment. Unset optionals fall back to
/// per-experiment defaults.
struct ExperimentConfig {
  std::string experiment;
  std::uint64_t seed = 1;
  Index sensors = 0;
  std::optional<Index> grid_size;
  std::optional<Index> k;
  std::optional<std::string> metric;
  std::optional<double> alpha;
  Matrix metric_matrix;            // metric = explicit
  sim::NoiseSpec noise;
  std::optional<std::size_t> samples;
  std::optional<std::size_t> instances;
  std::string out_dir = ".";
  ReportFormat format = ReportFormat::kBoth;
  double q2 = 1.0;
  bool noiseless = false;
  std::map<std::string, double> tolerances;  // tol.<name> overrides
  std::optional<Matrix> leadfield;           // complete leadfield from leadfield_path
  std::optional<Index> source_index;
};

/// Tolerance names accepted after "tol.", with their defaults.
const std::map<std::string, double>& default_tolerances();

/// Names of the metric recipes accepted by the `metric` key.
const std::vector<std::string>& metric_names();

/// Experiments selected by the file and overrides: the `experiment` key if
/// present, else every section in file order.
std::vector<std::string> selected_experiments(const ConfigFile& file, const std::vector<Entry>& overrides);

/// Globals, then the experiment's section, then overrides. Validates every
/// field and loads explicit matrices.
ExperimentConfig resolve(const ConfigFile& file, const std::string& experiment, const std::vector<Entry>& overrides);

/// Keys accepted in config files and overrides, including any "tol." key.
bool is_known_key(const std::string& key);

/// Known experiment names.
bool is_experiment(const std::string& name);

}  // namespace dipscan::cfg
