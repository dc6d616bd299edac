#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dipscan/config.hpp"

namespace dipscan::exp {

struct ExperimentInfo {
  const char* name;
  const char* description;
};

const std::vector<ExperimentInfo>& experiments();

/// Per-instance detail, one row per instance (or candidate for `scan`).
struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};

struct ExperimentResult {
  std::string experiment;
  std::uint64_t seed = 0;
  std::size_t instances = 0;
  double max_deviation = 0;
  double tolerance = 0;
  bool pass = false;
  std::vector<std::uint64_t> failing_seeds;
  std::string json;  // serialized report
  Table table;
  cfg::ReportFormat format = cfg::ReportFormat::kBoth;
  std::string out_dir;

  /// One line: experiment, seed, instances, deviation, tolerance, verdict.
  std::string summary() const;
};

ExperimentResult run_experiment(const cfg::ExperimentConfig& config);

std::string to_csv(const Table& table);

/// Writes <experiment>-<seed>.csv and/or .json into out_dir, creating it if
/// needed. Returns the written paths. Throws kIo when out_dir is unwritable.
std::vector<std::string> write_report(const ExperimentResult& result, cfg::ReportFormat format,
                                      const std::string& out_dir);

}  // namespace dipscan::exp
