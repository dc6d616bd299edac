#include "dipscan/dipscan.h"

#include <memory>
#include <new>
#include <string>
#include <vector>

#include "dipscan/config.hpp"
#include "dipscan/error.hpp"
#include "dipscan/experiments.hpp"
#include "dipscan/inverse_scan.hpp"
#include "dipscan/linalg.hpp"

struct dipscan_config {
  dipscan::cfg::ConfigFile file;
  std::vector<dipscan::cfg::Entry> overrides;
  mutable std::vector<std::string> selected;
};

struct dipscan_result {
  dipscan::exp::ExperimentResult result;
  std::string csv;
  std::string summary;
};

struct dipscan_metric {
  dipscan::linalg::Metric metric;
};

namespace {

using dipscan::Error;
using dipscan::ErrorCode;
using dipscan::Index;
using dipscan::Matrix;
using dipscan::Vector;

thread_local std::string last_error;

dipscan_status fail(dipscan_status status, const std::string& message) {
  last_error = message;
  return status;
}

template <typename F>
dipscan_status guarded(F&& body) {
  try {
    body();
    last_error.clear();
    return DIPSCAN_OK;
  } catch (const Error& e) {
    return fail(static_cast<dipscan_status>(e.code()), e.what());
  } catch (const std::bad_alloc&) {
    return fail(DIPSCAN_INTERNAL, "out of memory");
  } catch (const std::exception& e) {
    return fail(DIPSCAN_INTERNAL, e.what());
  }
}

void require(bool ok, const char* what) {
  if (!ok) throw Error(ErrorCode::kInvalidArgument, what);
}

Matrix row_major(const double* data, size_t rows, size_t cols) {
  Matrix m(static_cast<Index>(rows), static_cast<Index>(cols));
  for (size_t i = 0; i < rows; ++i) {
    for (size_t j = 0; j < cols; ++j) m(static_cast<Index>(i), static_cast<Index>(j)) = data[i * cols + j];
  }
  return m;
}

struct FitInputs {
  Matrix leadfield;
  Vector data;
};

FitInputs fit_inputs(const dipscan_metric* metric, const double* leadfield, size_t n, size_t k, const double* data,
                     const void* out) {
  require(metric && leadfield && data && out, "null argument");
  require(k > 0, "leadfield needs at least one column");
  if (static_cast<Index>(n) != metric->metric.dim()) {
    throw Error(ErrorCode::kDimensionMismatch, "leadfield rows differ from the metric dimension");
  }
  FitInputs in;
  in.leadfield = row_major(leadfield, n, k);
  in.data = Eigen::Map<const Vector>(data, static_cast<Index>(n));
  return in;
}

}  // namespace

extern "C" {

const char* dipscan_version(void) { return "0.1.0"; }

const char* dipscan_status_name(dipscan_status status) {
  if (status == DIPSCAN_OK) return "ok";
  return dipscan::error_code_name(static_cast<ErrorCode>(status));
}

const char* dipscan_last_error(void) { return last_error.c_str(); }

size_t dipscan_experiment_count(void) { return dipscan::exp::experiments().size(); }

dipscan_status dipscan_experiment_info(size_t index, const char** name, const char** description) {
  return guarded([&] {
    const auto& list = dipscan::exp::experiments();
    require(index < list.size(), "experiment index out of range");
    if (name) *name = list[index].name;
    if (description) *description = list[index].description;
  });
}

dipscan_status dipscan_config_load(const char* path, dipscan_config** out) {
  return guarded([&] {
    require(path && out, "null argument");
    *out = nullptr;
    auto c = std::make_unique<dipscan_config>();
    c->file = dipscan::cfg::load_config(path);
    *out = c.release();
  });
}

dipscan_status dipscan_config_parse(const char* text, dipscan_config** out) {
  return guarded([&] {
    require(text && out, "null argument");
    *out = nullptr;
    auto c = std::make_unique<dipscan_config>();
    c->file = dipscan::cfg::parse_config(text);
    *out = c.release();
  });
}

dipscan_status dipscan_config_set(dipscan_config* config, const char* key, const char* value) {
  return guarded([&] {
    require(config && key && value, "null argument");
    const std::string k = key;
    if (!dipscan::cfg::is_known_key(k)) throw Error(ErrorCode::kConfig, "override: unknown field '" + k + "'");
    if (std::string(value).empty()) throw Error(ErrorCode::kConfig, "override: field '" + k + "': missing value");
    config->overrides.push_back({k, value, 0});
  });
}

dipscan_status dipscan_config_validate(const dipscan_config* config) {
  return guarded([&] {
    require(config, "null argument");
    for (const auto& name : dipscan::cfg::selected_experiments(config->file, config->overrides)) {
      dipscan::cfg::resolve(config->file, name, config->overrides);
    }
  });
}

dipscan_status dipscan_config_selected_count(const dipscan_config* config, size_t* count) {
  return guarded([&] {
    require(config && count, "null argument");
    *count = dipscan::cfg::selected_experiments(config->file, config->overrides).size();
  });
}

dipscan_status dipscan_config_selected_name(const dipscan_config* config, size_t index, const char** name) {
  return guarded([&] {
    require(config && name, "null argument");
    config->selected = dipscan::cfg::selected_experiments(config->file, config->overrides);
    require(index < config->selected.size(), "experiment index out of range");
    *name = config->selected[index].c_str();
  });
}

void dipscan_config_free(dipscan_config* config) { delete config; }

dipscan_status dipscan_run(const dipscan_config* config, const char* experiment, dipscan_result** out) {
  return guarded([&] {
    require(config && out, "null argument");
    *out = nullptr;
    std::string name;
    if (experiment) {
      name = experiment;
    } else {
      name = dipscan::cfg::selected_experiments(config->file, config->overrides).front();
    }
    const auto resolved = dipscan::cfg::resolve(config->file, name, config->overrides);
    auto r = std::make_unique<dipscan_result>();
    r->result = dipscan::exp::run_experiment(resolved);
    r->csv = dipscan::exp::to_csv(r->result.table);
    r->summary = r->result.summary();
    *out = r.release();
  });
}

int dipscan_result_pass(const dipscan_result* result) { return result && result->result.pass ? 1 : 0; }
uint64_t dipscan_result_seed(const dipscan_result* result) { return result ? result->result.seed : 0; }
size_t dipscan_result_instances(const dipscan_result* result) { return result ? result->result.instances : 0; }
double dipscan_result_max_deviation(const dipscan_result* result) { return result ? result->result.max_deviation : 0.0; }
double dipscan_result_tolerance(const dipscan_result* result) { return result ? result->result.tolerance : 0.0; }

size_t dipscan_result_failing_seed_count(const dipscan_result* result) {
  return result ? result->result.failing_seeds.size() : 0;
}

uint64_t dipscan_result_failing_seed(const dipscan_result* result, size_t index) {
  if (!result || index >= result->result.failing_seeds.size()) return 0;
  return result->result.failing_seeds[index];
}

const char* dipscan_result_experiment(const dipscan_result* result) {
  return result ? result->result.experiment.c_str() : "";
}
const char* dipscan_result_summary(const dipscan_result* result) { return result ? result->summary.c_str() : ""; }
const char* dipscan_result_json(const dipscan_result* result) { return result ? result->result.json.c_str() : ""; }
const char* dipscan_result_csv(const dipscan_result* result) { return result ? result->csv.c_str() : ""; }

dipscan_status dipscan_result_write(const dipscan_result* result, const char* out_dir, dipscan_format format,
                                    size_t* written) {
  return guarded([&] {
    require(result, "null argument");
    dipscan::cfg::ReportFormat f = result->result.format;
    switch (format) {
      case DIPSCAN_FORMAT_DEFAULT: break;
      case DIPSCAN_FORMAT_CSV: f = dipscan::cfg::ReportFormat::kCsv; break;
      case DIPSCAN_FORMAT_JSON: f = dipscan::cfg::ReportFormat::kJson; break;
      case DIPSCAN_FORMAT_BOTH: f = dipscan::cfg::ReportFormat::kBoth; break;
      default: require(false, "unknown report format");
    }
    const auto paths = dipscan::exp::write_report(result->result, f, out_dir ? out_dir : result->result.out_dir);
    if (written) *written = paths.size();
  });
}

void dipscan_result_free(dipscan_result* result) { delete result; }

dipscan_status dipscan_metric_create(const double* matrix, size_t n, dipscan_metric** out) {
  return guarded([&] {
    require(matrix && out, "null argument");
    require(n > 0, "metric dimension must be positive");
    *out = nullptr;
    *out = new dipscan_metric{dipscan::linalg::Metric(row_major(matrix, n, n))};
  });
}

size_t dipscan_metric_dim(const dipscan_metric* metric) {
  return metric ? static_cast<size_t>(metric->metric.dim()) : 0;
}

size_t dipscan_metric_rank(const dipscan_metric* metric) {
  return metric ? static_cast<size_t>(metric->metric.rank()) : 0;
}

void dipscan_metric_free(dipscan_metric* metric) { delete metric; }

dipscan_status dipscan_gof(const dipscan_metric* metric, const double* leadfield, size_t n, size_t k,
                           const double* data, double* gof) {
  return guarded([&] {
    const FitInputs in = fit_inputs(metric, leadfield, n, k, data, gof);
    *gof = dipscan::scan::gof(metric->metric, in.leadfield, in.data);
  });
}

dipscan_status dipscan_sloreta_power(const dipscan_metric* metric, const double* leadfield, size_t n, size_t k,
                                     const double* data, double* power) {
  return guarded([&] {
    const FitInputs in = fit_inputs(metric, leadfield, n, k, data, power);
    *power = dipscan::scan::sloreta_power(metric->metric, in.leadfield, in.data);
  });
}

dipscan_status dipscan_fit_moment(const dipscan_metric* metric, const double* leadfield, size_t n, size_t k,
                                  const double* data, double* moment) {
  return guarded([&] {
    const FitInputs in = fit_inputs(metric, leadfield, n, k, data, moment);
    const auto fit = dipscan::scan::weighted_ls_fit(metric->metric, in.leadfield, in.data);
    for (size_t i = 0; i < k; ++i) moment[i] = fit.moment(static_cast<Index>(i));
  });
}

}  // extern "C"
