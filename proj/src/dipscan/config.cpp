#include "dipscan/config.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "dipscan/error.hpp"

namespace dipscan::cfg {

namespace {

const std::vector<std::string> kExperiments = {"thm1", "thm2-sufficiency", "thm2-witness", "thm4", "thm5",
                                               "gradcheck", "eloreta", "scan", "simulate"};

const std::set<std::string> kKeys = {"experiment", "seed", "sensors", "grid_size", "k", "metric", "alpha",
                                     "metric_path", "noise", "sigma", "noise_path", "samples", "instances",
                                     "out_dir", "format", "q2", "noiseless", "leadfield_path", "source_index"};

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return "";
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

[[noreturn]] void fail(const std::string& where, const std::string& message) {
  throw Error(ErrorCode::kConfig, where + ": " + message);
}

std::string where(const std::string& source, const Entry& e) {
  return e.line > 0 ? source + ":" + std::to_string(e.line) : std::string("override");
}

// A value together with the place it came from, for diagnostics.
struct Located {
  std::string value;
  std::string where;
  std::string base_dir;
};

class FieldReader {
 public:
  explicit FieldReader(std::map<std::string, Located> values) : values_(std::move(values)) {}

  bool has(const std::string& key) const { return values_.count(key) > 0; }
  const Located& at(const std::string& key) const { return values_.at(key); }

  [[noreturn]] void bad(const std::string& key, const std::string& expected) const {
    const Located& v = at(key);
    fail(v.where, "field '" + key + "': expected " + expected + ", got '" + v.value + "'");
  }

  std::uint64_t unsigned_value(const std::string& key) const {
    const std::string& s = at(key).value;
    std::uint64_t out = 0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
    if (ec != std::errc() || ptr != s.data() + s.size()) bad(key, "a nonnegative integer");
    return out;
  }

  std::uint64_t positive(const std::string& key) const {
    const std::uint64_t v = unsigned_value(key);
    if (v == 0) bad(key, "a positive integer");
    return v;
  }

  double real(const std::string& key) const {
    const std::string& s = at(key).value;
    try {
      std::size_t used = 0;
      const double v = std::stod(s, &used);
      if (used != s.size() || !std::isfinite(v)) bad(key, "a finite number");
      return v;
    } catch (const std::logic_error&) {
      bad(key, "a finite number");
    }
  }

  double nonnegative(const std::string& key) const {
    const double v = real(key);
    if (v < 0.0) bad(key, "a nonnegative number");
    return v;
  }

  bool boolean(const std::string& key) const {
    const std::string& s = at(key).value;
    if (s == "true" || s == "1" || s == "yes") return true;
    if (s == "false" || s == "0" || s == "no") return false;
    bad(key, "true or false");
  }

  Matrix matrix(const std::string& key) const {
    const Located& v = at(key);
    std::filesystem::path p(v.value);
    if (p.is_relative() && !v.base_dir.empty()) p = std::filesystem::path(v.base_dir) / p;
    std::ifstream in(p);
    if (!in) fail(v.where, "field '" + key + "': cannot open '" + p.string() + "'");
    try {
      return linalg::read_matrix(in);
    } catch (const Error& e) {
      fail(v.where, "field '" + key + "': " + p.string() + ": " + e.what());
    }
  }

 private:
  std::map<std::string, Located> values_;
};

}  // namespace

const char* format_name(ReportFormat f) {
  switch (f) {
    case ReportFormat::kCsv: return "csv";
    case ReportFormat::kJson: return "json";
    case ReportFormat::kBoth: return "both";
  }
  return "both";
}

const std::map<std::string, double>& default_tolerances() {
  static const std::map<std::string, double> tol = {
      {"identity", 1e-10},  {"gof", 1e-12},       {"margin", 0.0},     {"improvement", 0.0},
      {"gradient", 1e-5},   {"vanishing", 1e-8},  {"beamformer", 1e-9}, {"transform", 1e-9},
      {"refinement_rate", 0.9}, {"eloreta", 1e-9}, {"mc_se", 5.0},
  };
  return tol;
}

const std::vector<std::string>& metric_names() {
  static const std::vector<std::string> names = {"identity", "inverse_noise", "classic_sloreta",
                                                 "sekihara_sloreta", "eloreta", "explicit", "random_spd"};
  return names;
}

bool is_known_key(const std::string& key) { return kKeys.count(key) > 0 || key.rfind("tol.", 0) == 0; }

bool is_experiment(const std::string& name) {
  return std::find(kExperiments.begin(), kExperiments.end(), name) != kExperiments.end();
}

ConfigFile parse_config(const std::string& text, const std::string& source, const std::string& base_dir) {
  ConfigFile out;
  out.source = source;
  out.base_dir = base_dir;
  std::istringstream in(text);
  std::string raw;
  int line = 0;
  std::set<std::string> seen_sections;
  std::set<std::string> scope_keys;
  while (std::getline(in, raw)) {
    ++line;
    const std::string s = trim(raw);
    if (s.empty() || s[0] == '#' || s[0] == ';') continue;
    const std::string at = source + ":" + std::to_string(line);
    if (s.front() == '[') {
      if (s.back() != ']') fail(at, "unterminated section header");
      const std::string name = trim(s.substr(1, s.size() - 2));
      if (!is_experiment(name)) fail(at, "unknown experiment section '" + name + "'");
      if (!seen_sections.insert(name).second) fail(at, "duplicate section '" + name + "'");
      out.sections.push_back({name, line, {}});
      scope_keys.clear();
      continue;
    }
    const auto eq = s.find('=');
    if (eq == std::string::npos) fail(at, "expected 'key = value'");
    Entry e{trim(s.substr(0, eq)), trim(s.substr(eq + 1)), line};
    if (e.key.empty()) fail(at, "missing key before '='");
    if (!is_known_key(e.key)) fail(at, "unknown field '" + e.key + "'");
    if (e.value.empty()) fail(at, "field '" + e.key + "': missing value");
    if (!scope_keys.insert(e.key).second) fail(at, "field '" + e.key + "' set twice");
    if (out.sections.empty()) {
      out.globals.push_back(std::move(e));
    } else {
      if (e.key == "experiment") fail(at, "field 'experiment' is not allowed inside a section");
      out.sections.back().entries.push_back(std::move(e));
    }
  }
  return out;
}

ConfigFile load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "cannot open config '" + path + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  const std::string dir = std::filesystem::path(path).parent_path().string();
  return parse_config(buf.str(), path, dir);
}

std::vector<std::string> selected_experiments(const ConfigFile& file, const std::vector<Entry>& overrides) {
  std::optional<Entry> chosen;
  std::string at;
  for (const auto& e : file.globals) {
    if (e.key == "experiment") chosen = e, at = where(file.source, e);
  }
  for (const auto& e : overrides) {
    if (e.key == "experiment") chosen = e, at = "override";
  }
  if (chosen) {
    if (!is_experiment(chosen->value)) fail(at, "field 'experiment': unknown experiment '" + chosen->value + "'");
    return {chosen->value};
  }
  std::vector<std::string> out;
  for (const auto& s : file.sections) out.push_back(s.name);
  if (out.empty()) fail(file.source, "missing required field 'experiment'");
  return out;
}

ExperimentConfig resolve(const ConfigFile& file, const std::string& experiment, const std::vector<Entry>& overrides) {
  if (!is_experiment(experiment)) fail(file.source, "field 'experiment': unknown experiment '" + experiment + "'");
  std::map<std::string, Located> values;
  auto apply = [&](const Entry& e, const std::string& base) {
    if (!is_known_key(e.key)) fail(where(file.source, e), "unknown field '" + e.key + "'");
    values[e.key] = Located{e.value, where(file.source, e), base};
  };
  for (const auto& e : file.globals) apply(e, file.base_dir);
  for (const auto& s : file.sections) {
    if (s.name != experiment) continue;
    for (const auto& e : s.entries) apply(e, file.base_dir);
  }
  for (const auto& e : overrides) apply(e, "");

  const FieldReader r(values);
  ExperimentConfig c;
  c.experiment = experiment;
  if (r.has("seed")) c.seed = r.unsigned_value("seed");
  if (!r.has("sensors")) fail(file.source, "missing required field 'sensors'");
  c.sensors = static_cast<Index>(r.positive("sensors"));
  if (c.sensors < 4) r.bad("sensors", "at least 4 sensors");
  if (r.has("grid_size")) c.grid_size = static_cast<Index>(r.positive("grid_size"));
  if (r.has("k")) {
    c.k = static_cast<Index>(r.positive("k"));
    if (*c.k >= c.sensors) r.bad("k", "fewer columns than sensors");
  }
  if (r.has("metric")) {
    const auto& names = metric_names();
    if (std::find(names.begin(), names.end(), r.at("metric").value) == names.end()) {
      r.bad("metric", "one of identity, inverse_noise, classic_sloreta, sekihara_sloreta, eloreta, explicit, random_spd");
    }
    c.metric = r.at("metric").value;
  }
  if (r.has("alpha")) c.alpha = r.nonnegative("alpha");
  if (c.metric == std::optional<std::string>("explicit")) {
    if (!r.has("metric_path")) fail(r.at("metric").where, "metric 'explicit' requires field 'metric_path'");
    c.metric_matrix = r.matrix("metric_path");
    if (c.metric_matrix.rows() != c.sensors || c.metric_matrix.cols() != c.sensors) {
      fail(r.at("metric_path").where, "field 'metric_path': expected a sensors x sensors matrix");
    }
  } else if (r.has("metric_path")) {
    fail(r.at("metric_path").where, "field 'metric_path' needs metric = explicit");
  }

  if (r.has("noise")) {
    const std::string& n = r.at("noise").value;
    if (n == "white") {
      c.noise.kind = sim::NoiseKind::kWhite;
    } else if (n == "random_spd") {
      c.noise.kind = sim::NoiseKind::kRandomSpd;
    } else if (n == "explicit") {
      c.noise.kind = sim::NoiseKind::kExplicit;
    } else {
      r.bad("noise", "white, random_spd or explicit");
    }
  }
  if (r.has("sigma")) {
    c.noise.sigma = r.real("sigma");
    if (!(c.noise.sigma > 0.0)) r.bad("sigma", "a positive number");
  }
  if (c.noise.kind == sim::NoiseKind::kExplicit) {
    if (!r.has("noise_path")) fail(r.at("noise").where, "noise 'explicit' requires field 'noise_path'");
    c.noise.explicit_matrix = r.matrix("noise_path");
    if (c.noise.explicit_matrix.rows() != c.sensors || c.noise.explicit_matrix.cols() != c.sensors) {
      fail(r.at("noise_path").where, "field 'noise_path': expected a sensors x sensors matrix");
    }
  } else if (r.has("noise_path")) {
    fail(r.at("noise_path").where, "field 'noise_path' needs noise = explicit");
  }

  if (r.has("samples")) c.samples = r.positive("samples");
  if (r.has("instances")) c.instances = r.positive("instances");
  if (r.has("out_dir")) c.out_dir = r.at("out_dir").value;
  if (r.has("format")) {
    const std::string& f = r.at("format").value;
    if (f == "csv") {
      c.format = ReportFormat::kCsv;
    } else if (f == "json") {
      c.format = ReportFormat::kJson;
    } else if (f == "both") {
      c.format = ReportFormat::kBoth;
    } else {
      r.bad("format", "csv, json or both");
    }
  }
  if (r.has("q2")) c.q2 = r.nonnegative("q2");
  if (r.has("noiseless")) c.noiseless = r.boolean("noiseless");

  if (r.has("leadfield_path")) {
    Matrix l = r.matrix("leadfield_path");
    if (l.rows() != c.sensors) fail(r.at("leadfield_path").where, "field 'leadfield_path': row count differs from sensors");
    if (l.cols() == 0 || l.cols() % 3 != 0) {
      fail(r.at("leadfield_path").where, "field 'leadfield_path': column count must be a positive multiple of 3");
    }
    c.leadfield = std::move(l);
  }
  if (r.has("source_index")) {
    if (!c.leadfield) fail(r.at("source_index").where, "field 'source_index' needs field 'leadfield_path'");
    c.source_index = static_cast<Index>(r.unsigned_value("source_index"));
    if (*c.source_index >= c.leadfield->cols() / 3) r.bad("source_index", "a location index inside the leadfield");
  }

  const auto& tol = default_tolerances();
  for (const auto& [key, located] : values) {
    if (key.rfind("tol.", 0) != 0) continue;
    const std::string name = key.substr(4);
    if (!tol.count(name)) fail(located.where, "unknown tolerance '" + name + "'");
    c.tolerances[name] = r.nonnegative(key);
  }
  return c;
}

}  // namespace dipscan::cfg
