#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "dipscan/forward_sim.hpp"
#include "dipscan/linalg.hpp"

namespace dipscan::scan {

using linalg::Metric;

/// Weighted least-squares fit of one candidate leadfield A to data d in <.,.>_C.
struct DipoleFit {
  Vector moment;                // argmin_j |d - A j|_C^2
  double residual_norm_sq = 0;  // |d - A moment|_C^2
  double data_norm_sq = 0;      // |d|_C^2
  double gof = 0;               // 1 - residual / |d|_C^2; 0 for zero data
};

/// Solves the whitened least-squares problem min |C^{1/2}(d - A j)| by
/// orthogonal factorization of C^{1/2} A. Throws kDegenerateCandidate when
/// A^T C A is numerically singular and kOutsideMetricRange when d or a column
/// of A leaves range(C).
DipoleFit weighted_ls_fit(const Metric& c, const MatrixRef& a, const VectorRef& d);

/// Goodness of fit 1 - rv / |d|_C^2. Throws kZeroData when |d|_C = 0.
double gof(const Metric& c, const MatrixRef& a, const VectorRef& d);

/// min_j |d - A j|_C^2.
double residual_variance(const Metric& c, const MatrixRef& a, const VectorRef& d);

/// (A^T C A)^{-1/2} A^T C d.
Vector sloreta_reconstruction(const Metric& c, const MatrixRef& a, const VectorRef& d);

/// Squared Euclidean norm of the sLORETA reconstruction.
double sloreta_power(const Metric& c, const MatrixRef& a, const VectorRef& d);

// --- metric recipes -----------------------------------------------------

struct ELoretaWeights {
  std::vector<Eigen::Matrix3d> blocks;  // W_i, SPD
  double alpha = 0;
  double residual = 0;  // max_i |W_i - (L_i^T (L W^-1 L^T + alpha H)^+ L_i)^{1/2}|_F
  int iterations = 0;
  bool converged = false;
};

struct ELoretaOptions {
  double tol = 1e-9;
  int max_iter = 500;
};

/// Plain fixed-point iteration for the eLORETA block weights, started from
/// W_i = I. Non-convergence is reported through `converged`, not thrown.
/// Throws kElOretaIndefinite when an iterate loses positive definiteness.
ELoretaWeights solve_eloreta_weights(const MatrixRef& complete_leadfield, double alpha,
                                     const ELoretaOptions& options = {});

/// Defining-equation defect of given weights (same quantity as `residual`).
double eloreta_residual(const MatrixRef& complete_leadfield, double alpha,
                        const std::vector<Eigen::Matrix3d>& blocks);

enum class MetricKind {
  kIdentity,
  kInverseNoise,
  kClassicSloreta,   // (L L^T + alpha H)^+
  kSekiharaSloreta,  // (L L^T + alpha I)^{-1}
  kEloreta,          // (L W^-1 L^T + alpha H)^+
  kExplicit,
};

const char* metric_kind_name(MetricKind kind);
std::optional<MetricKind> parse_metric_kind(const std::string& name);

struct MetricRecipe {
  MetricKind kind = MetricKind::kIdentity;
  double alpha = 0.0;
  Matrix explicit_matrix;  // kExplicit
};

struct MetricInputs {
  Matrix complete_leadfield;      // N x 3M, used by the sLORETA family
  std::optional<Matrix> noise;    // required by kInverseNoise
  ELoretaOptions eloreta;
};

struct BuiltMetric {
  Metric metric;
  std::optional<ELoretaWeights> eloreta;
};

/// Builds the metric for a recipe. Pseudo-inverse recipes record their kernel.
/// kEloreta fails with kElOretaNotConverged when the weights do not converge.
BuiltMetric build_metric(const MetricRecipe& recipe, const MetricInputs& inputs);

// --- scanning -----------------------------------------------------------

enum CandidateFlag : unsigned {
  kFlagNone = 0,
  kFlagDegenerate = 1u << 0,
  kFlagOutsideRange = 1u << 1,
  kFlagZeroData = 1u << 2,
};

std::string flags_to_string(unsigned flags);

struct BeamformerColumns {
  double p_ug = 0;
  double p_nai = 0;
  double p_sam = 0;
  double nai_tilde = 0;
};

struct ScanEntry {
  std::string id;
  Index k = 0;
  double gof = 0;
  double sloreta_power = 0;
  unsigned flags = kFlagNone;
  std::optional<BeamformerColumns> beamformer;
};

struct ScanReport {
  std::vector<ScanEntry> entries;
  std::optional<std::size_t> argmax;  // by gof, over unflagged entries
  bool is_tie = false;
};

/// GOF values closer than this count as tied; the lowest index wins.
inline constexpr double kTieTolerance = 1e-12;

/// Evaluates every candidate independently. Per-candidate failures become
/// flags; the scan never aborts on them.
ScanReport scan(const Metric& c, const sim::CandidateGrid& grid, const VectorRef& d);

/// Argmax with lowest-index tie breaking over `values`, skipping entries with
/// skip[i] set. Returns {index, is_tie}.
std::pair<std::optional<std::size_t>, bool> argmax_with_ties(const std::vector<double>& values,
                                                             const std::vector<bool>& skip,
                                                             double tie_tolerance);

}  // namespace dipscan::scan
