#include "dipscan/inverse_scan.hpp"

#include <algorithm>
#include <cmath>

#include "dipscan/error.hpp"
#include "dipscan/parallel.hpp"

namespace dipscan::scan {

namespace {

void require_shapes(const Metric& c, const MatrixRef& a, const VectorRef& d) {
  if (a.rows() != c.dim() || d.size() != c.dim()) {
    throw Error(ErrorCode::kDimensionMismatch,
                "leadfield " + std::to_string(a.rows()) + "x" + std::to_string(a.cols()) + " / data " +
                    std::to_string(d.size()) + " do not match metric dimension " + std::to_string(c.dim()));
  }
  if (a.cols() == 0) throw Error(ErrorCode::kDimensionMismatch, "leadfield has no columns");
}

void require_range(const Metric& c, const MatrixRef& a, const VectorRef& d) {
  c.require_in_range(d);
  for (Index j = 0; j < a.cols(); ++j) c.require_in_range(a.col(j));
}

// Symmetric Gram matrix must be numerically invertible: lambda_min > 1e-12 lambda_max.
void require_nondegenerate(const Matrix& gram) {
  Eigen::SelfAdjointEigenSolver<Matrix> solver(gram, Eigen::EigenvaluesOnly);
  const double lo = solver.eigenvalues()(0);
  const double hi = solver.eigenvalues()(gram.rows() - 1);
  if (!(hi > 0.0) || lo <= 1e-12 * hi) {
    throw Error(ErrorCode::kDegenerateCandidate, "degenerate candidate: A^T C A is singular");
  }
}

Matrix symmetrized(const Matrix& m) { return 0.5 * (m + m.transpose()); }

}  // namespace

DipoleFit weighted_ls_fit(const Metric& c, const MatrixRef& a, const VectorRef& d) {
  require_shapes(c, a, d);
  require_range(c, a, d);

  const Matrix& root = c.sqrt_matrix();
  const Matrix wa = root * a;
  const Vector wd = root * d;
  require_nondegenerate(symmetrized(wa.transpose() * wa));

  DipoleFit fit;
  fit.moment = wa.colPivHouseholderQr().solve(wd);
  fit.residual_norm_sq = (wd - wa * fit.moment).squaredNorm();
  fit.data_norm_sq = wd.squaredNorm();
  fit.gof = fit.data_norm_sq > 0.0 ? 1.0 - fit.residual_norm_sq / fit.data_norm_sq : 0.0;
  return fit;
}

double gof(const Metric& c, const MatrixRef& a, const VectorRef& d) {
  const DipoleFit fit = weighted_ls_fit(c, a, d);
  if (!(fit.data_norm_sq > 0.0)) throw Error(ErrorCode::kZeroData, "zero data: |d|_C = 0");
  return fit.gof;
}

double residual_variance(const Metric& c, const MatrixRef& a, const VectorRef& d) {
  return weighted_ls_fit(c, a, d).residual_norm_sq;
}

Vector sloreta_reconstruction(const Metric& c, const MatrixRef& a, const VectorRef& d) {
  require_shapes(c, a, d);
  require_range(c, a, d);

  const Matrix ca = c.matrix() * a;
  const Matrix gram = symmetrized(a.transpose() * ca);
  require_nondegenerate(gram);

  Eigen::SelfAdjointEigenSolver<Matrix> solver(gram);
  const Vector inv_roots = solver.eigenvalues().cwiseSqrt().cwiseInverse();
  const Matrix inv_sqrt = solver.eigenvectors() * inv_roots.asDiagonal() * solver.eigenvectors().transpose();
  return inv_sqrt * (ca.transpose() * d);
}

double sloreta_power(const Metric& c, const MatrixRef& a, const VectorRef& d) {
  return sloreta_reconstruction(c, a, d).squaredNorm();
}

// --- eLORETA ------------------------------------------------------------

namespace {

Index location_count(const MatrixRef& complete) {
  if (complete.rows() == 0 || complete.cols() == 0 || complete.cols() % 3 != 0) {
    throw Error(ErrorCode::kDimensionMismatch, "complete leadfield must be N x 3M with M >= 1");
  }
  return complete.cols() / 3;
}

// (L W^-1 L^T + alpha H)^+
Metric eloreta_metric(const MatrixRef& l, double alpha, const std::vector<Eigen::Matrix3d>& blocks) {
  const Index n = l.rows();
  Matrix k = alpha * linalg::centering_operator(n);
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    const auto li = l.middleCols(3 * static_cast<Index>(i), 3);
    const Eigen::Matrix3d w_inv = blocks[i].llt().solve(Eigen::Matrix3d::Identity());
    k += li * w_inv * li.transpose();
  }
  return linalg::psd_power(Metric(symmetrized(k)), -1.0, linalg::KernelPolicy::kPseudoInverse);
}

// (L_i^T K L_i)^{1/2} for every block.
std::vector<Eigen::Matrix3d> eloreta_targets(const MatrixRef& l, double alpha,
                                             const std::vector<Eigen::Matrix3d>& blocks) {
  const Metric metric = eloreta_metric(l, alpha, blocks);
  const Matrix& k = metric.matrix();
  std::vector<Eigen::Matrix3d> targets(blocks.size());
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    const auto li = l.middleCols(3 * static_cast<Index>(i), 3);
    Eigen::Matrix3d b = li.transpose() * k * li;
    b = 0.5 * (b + b.transpose()).eval();
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> solver(b);
    const Eigen::Vector3d lambda = solver.eigenvalues();
    if (!(lambda(2) > 0.0) || lambda(0) <= 1e-12 * lambda(2)) {
      throw Error(ErrorCode::kElOretaIndefinite,
                  "eLORETA iterate indefinite at location " + std::to_string(i));
    }
    targets[i] = solver.eigenvectors() * lambda.cwiseSqrt().asDiagonal() * solver.eigenvectors().transpose();
  }
  return targets;
}

double max_defect(const std::vector<Eigen::Matrix3d>& blocks, const std::vector<Eigen::Matrix3d>& targets) {
  double worst = 0.0;
  for (std::size_t i = 0; i < blocks.size(); ++i) worst = std::max(worst, (blocks[i] - targets[i]).norm());
  return worst;
}

}  // namespace

double eloreta_residual(const MatrixRef& complete_leadfield, double alpha,
                        const std::vector<Eigen::Matrix3d>& blocks) {
  if (static_cast<Index>(blocks.size()) != location_count(complete_leadfield)) {
    throw Error(ErrorCode::kDimensionMismatch, "weight count does not match leadfield locations");
  }
  return max_defect(blocks, eloreta_targets(complete_leadfield, alpha, blocks));
}

ELoretaWeights solve_eloreta_weights(const MatrixRef& complete_leadfield, double alpha,
                                     const ELoretaOptions& options) {
  const Index m = location_count(complete_leadfield);
  if (!(alpha >= 0.0)) throw Error(ErrorCode::kInvalidArgument, "eLORETA regularization must be nonnegative");
  for (Index i = 0; i < m; ++i) {
    if (!linalg::full_column_rank(complete_leadfield.middleCols(3 * i, 3))) {
      throw Error(ErrorCode::kDegenerateCandidate, "leadfield block " + std::to_string(i) + " is rank deficient");
    }
  }

  ELoretaWeights out;
  out.alpha = alpha;
  out.blocks.assign(static_cast<std::size_t>(m), Eigen::Matrix3d::Identity());
  for (int iter = 0;; ++iter) {
    std::vector<Eigen::Matrix3d> targets = eloreta_targets(complete_leadfield, alpha, out.blocks);
    out.residual = max_defect(out.blocks, targets);
    out.iterations = iter;
    if (out.residual <= options.tol) {
      out.converged = true;
      return out;
    }
    if (iter >= options.max_iter) return out;
    out.blocks = std::move(targets);
  }
}

// --- metric recipes -----------------------------------------------------

const char* metric_kind_name(MetricKind kind) {
  switch (kind) {
    case MetricKind::kIdentity: return "identity";
    case MetricKind::kInverseNoise: return "inverse_noise";
    case MetricKind::kClassicSloreta: return "classic_sloreta";
    case MetricKind::kSekiharaSloreta: return "sekihara_sloreta";
    case MetricKind::kEloreta: return "eloreta";
    case MetricKind::kExplicit: return "explicit";
  }
  return "unknown";
}

std::optional<MetricKind> parse_metric_kind(const std::string& name) {
  for (MetricKind kind : {MetricKind::kIdentity, MetricKind::kInverseNoise, MetricKind::kClassicSloreta,
                          MetricKind::kSekiharaSloreta, MetricKind::kEloreta, MetricKind::kExplicit}) {
    if (name == metric_kind_name(kind)) return kind;
  }
  return std::nullopt;
}

BuiltMetric build_metric(const MetricRecipe& recipe, const MetricInputs& inputs) {
  if (!(recipe.alpha >= 0.0)) throw Error(ErrorCode::kInvalidArgument, "metric alpha must be nonnegative");
  const Matrix& l = inputs.complete_leadfield;
  auto require_leadfield = [&] {
    if (l.size() == 0) {
      throw Error(ErrorCode::kInvalidArgument,
                  std::string(metric_kind_name(recipe.kind)) + " metric requires the complete leadfield");
    }
  };

  switch (recipe.kind) {
    case MetricKind::kIdentity: {
      const Index n = l.size() > 0 ? l.rows() : inputs.noise ? inputs.noise->rows() : 0;
      if (n == 0) throw Error(ErrorCode::kInvalidArgument, "identity metric needs a sensor count");
      return {Metric::identity(n), std::nullopt};
    }
    case MetricKind::kInverseNoise:
      if (!inputs.noise) throw Error(ErrorCode::kInvalidArgument, "inverse_noise metric requires a noise covariance");
      return {linalg::psd_power(Metric(*inputs.noise), -1.0), std::nullopt};
    case MetricKind::kClassicSloreta: {
      require_leadfield();
      const Matrix k = l * l.transpose() + recipe.alpha * linalg::centering_operator(l.rows());
      return {linalg::psd_power(Metric(symmetrized(k)), -1.0, linalg::KernelPolicy::kPseudoInverse),
              std::nullopt};
    }
    case MetricKind::kSekiharaSloreta: {
      require_leadfield();
      const Matrix k = l * l.transpose() + recipe.alpha * Matrix::Identity(l.rows(), l.rows());
      return {linalg::psd_power(Metric(symmetrized(k)), -1.0), std::nullopt};
    }
    case MetricKind::kEloreta: {
      require_leadfield();
      ELoretaWeights weights = solve_eloreta_weights(l, recipe.alpha, inputs.eloreta);
      if (!weights.converged) {
        throw Error(ErrorCode::kElOretaNotConverged,
                    "eLORETA weights not converged: residual " + linalg::format_double(weights.residual));
      }
      Metric c = eloreta_metric(l, recipe.alpha, weights.blocks);
      return {std::move(c), std::move(weights)};
    }
    case MetricKind::kExplicit:
      return {Metric(recipe.explicit_matrix), std::nullopt};
  }
  throw Error(ErrorCode::kInternal, "unknown metric kind");
}

// --- scanning -----------------------------------------------------------

std::string flags_to_string(unsigned flags) {
  std::string out;
  auto add = [&](const char* name) {
    if (!out.empty()) out += '|';
    out += name;
  };
  if (flags & kFlagDegenerate) add("degenerate");
  if (flags & kFlagOutsideRange) add("outside_range");
  if (flags & kFlagZeroData) add("zero_data");
  return out;
}

std::pair<std::optional<std::size_t>, bool> argmax_with_ties(const std::vector<double>& values,
                                                             const std::vector<bool>& skip,
                                                             double tie_tolerance) {
  std::optional<double> best;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (skip[i]) continue;
    if (!best || values[i] > *best) best = values[i];
  }
  if (!best) return {std::nullopt, false};
  std::optional<std::size_t> chosen;
  std::size_t near_best = 0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (skip[i] || values[i] < *best - tie_tolerance) continue;
    if (!chosen) chosen = i;
    ++near_best;
  }
  return {chosen, near_best > 1};
}

ScanReport scan(const Metric& c, const sim::CandidateGrid& grid, const VectorRef& d) {
  if (grid.candidates.empty()) throw Error(ErrorCode::kInvalidArgument, "scan grid is empty");

  ScanReport report;
  report.entries.resize(grid.size());
  parallel_for(grid.size(), [&](std::size_t i) {
    const sim::Candidate& cand = grid.candidates[i];
    ScanEntry& entry = report.entries[i];
    entry.id = cand.id;
    entry.k = cand.leadfield.cols();
    try {
      const DipoleFit fit = weighted_ls_fit(c, cand.leadfield, d);
      if (!(fit.data_norm_sq > 0.0)) {
        entry.flags |= kFlagZeroData;
        return;
      }
      entry.gof = fit.gof;
      entry.sloreta_power = sloreta_power(c, cand.leadfield, d);
    } catch (const Error& e) {
      if (e.code() == ErrorCode::kOutsideMetricRange) {
        entry.flags |= kFlagOutsideRange;
      } else if (e.code() == ErrorCode::kDegenerateCandidate) {
        entry.flags |= kFlagDegenerate;
      } else {
        throw;
      }
    }
  });

  std::vector<double> values(grid.size());
  std::vector<bool> skip(grid.size());
  for (std::size_t i = 0; i < grid.size(); ++i) {
    values[i] = report.entries[i].gof;
    skip[i] = report.entries[i].flags != kFlagNone;
  }
  std::tie(report.argmax, report.is_tie) = argmax_with_ties(values, skip, kTieTolerance);
  return report;
}

}  // namespace dipscan::scan
