#include "dipscan/equivalence_lab.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "dipscan/error.hpp"
#include "dipscan/random.hpp"

namespace dipscan::lab {

namespace {

// A^T C A and C A for one candidate, with its Cholesky factor.
struct Gram {
  Matrix ca;
  Matrix g;
  Eigen::LLT<Matrix> llt;
};

Gram gram(const Metric& c, const MatrixRef& a) {
  if (a.rows() != c.dim() || a.cols() == 0) {
    throw Error(ErrorCode::kDimensionMismatch, "candidate does not match metric dimension");
  }
  Gram out;
  out.ca = c.matrix() * a;
  out.g = a.transpose() * out.ca;
  out.g = 0.5 * (out.g + out.g.transpose());
  Eigen::SelfAdjointEigenSolver<Matrix> eig(out.g, Eigen::EigenvaluesOnly);
  const double top = eig.eigenvalues().maxCoeff();
  if (!(top > 0.0) || eig.eigenvalues().minCoeff() <= 1e-12 * top) {
    throw Error(ErrorCode::kDegenerateCandidate, "degenerate candidate: A^T C A is singular");
  }
  out.llt.compute(out.g);
  return out;
}

void require_noise(const Metric& c, const MatrixRef& noise) {
  if (noise.rows() != c.dim() || noise.cols() != c.dim()) {
    throw Error(ErrorCode::kDimensionMismatch, "noise covariance does not match metric dimension");
  }
}

double noise_term(const MatrixRef& noise, const Gram& gr) {
  const Matrix k = gr.ca.transpose() * noise * gr.ca;
  return gr.llt.solve(k).trace();
}

Metric scaled_inverse_noise(const MatrixRef& noise, double alpha) {
  const Matrix inv = linalg::psd_power(Metric(noise), -1.0).matrix();
  return Metric(alpha * inv);
}

double ulp(double x) {
  return std::nextafter(x, std::numeric_limits<double>::infinity()) - x;
}

// a + b, reporting whether the floating-point sum is exact.
bool exact_sum(double a, double b, double& sum) {
  sum = a + b;
  const double bb = sum - a;
  const double err = (a - (sum - bb)) + (b - bb);
  return err == 0.0;
}

struct ExactShift {
  double epsilon = 0;
  double lowered = 0;
  double raised = 0;
  bool exact = false;
};

// Largest convenient epsilon <= target for which lo - eps and hi + eps are
// both exact in double precision, so the sum of the pair is preserved.
// Smaller goals are tried when a shift crosses a binade with incompatible
// spacing.
ExactShift exact_shift(double lo, double hi, double target) {
  const double quantum = std::max(ulp(lo), ulp(hi));
  for (int step = 0; step < 64 * 32; ++step) {
    const double goal = std::ldexp(target * (1.0 - (step % 64) / 128.0), -(step / 64));
    for (double u = quantum; u <= goal; u *= 2.0) {
      for (int parity = 0; parity < 2; ++parity) {
        const double eps = (std::floor(goal / u) - parity) * u;
        if (!(eps > 0.0)) continue;
        ExactShift out;
        if (exact_sum(lo, -eps, out.lowered) && exact_sum(hi, eps, out.raised) && out.lowered > 0.0) {
          out.epsilon = eps;
          out.exact = true;
          return out;
        }
      }
    }
  }
  ExactShift out;
  out.epsilon = target;
  out.lowered = lo - target;
  out.raised = hi + target;
  return out;
}

int sign_with_band(double d, double band) {
  if (d > band) return 1;
  if (d < -band) return -1;
  return 0;
}

}  // namespace

ExpectedScanObjective expected_power_terms(const Metric& c, const MatrixRef& a, const VectorRef& x,
                                           const MatrixRef& noise) {
  require_noise(c, noise);
  if (x.size() != c.dim()) throw Error(ErrorCode::kDimensionMismatch, "source does not match metric dimension");
  const Gram gr = gram(c, a);
  const Vector y = gr.ca.transpose() * x;
  ExpectedScanObjective out;
  out.signal_term = std::max(0.0, y.dot(gr.llt.solve(y)));
  out.noise_term = noise_term(noise, gr);
  out.total = out.signal_term + out.noise_term;
  return out;
}

ExpectedScanObjective expected_power_terms(const Metric& c, const MatrixRef& a, const sim::SourceScenario& sc) {
  return expected_power_terms(c, a, sim::effective_source(sc), sc.noise_cov);
}

double expected_residual_variance(const Metric& c, const MatrixRef& a, const sim::SourceScenario& sc) {
  const Vector x = sim::effective_source(sc);
  const double data = (c.matrix() * sc.noise_cov).trace() + linalg::metric_norm_sq(c, x);
  return data - expected_power_terms(c, a, x, sc.noise_cov).total;
}

double noise_distortion(const Metric& c, const MatrixRef& a, const MatrixRef& noise) {
  require_noise(c, noise);
  return noise_term(noise, gram(c, a));
}

Matrix noise_distortion_gradient(const Metric& c, const MatrixRef& a, const MatrixRef& noise) {
  require_noise(c, noise);
  const Gram gr = gram(c, a);
  const Matrix p = gr.ca.transpose();  // A^T C
  const Matrix k = p * noise * gr.ca;  // A^T C N C A
  const Matrix m = gr.llt.solve(p * noise * c.matrix() - k * gr.llt.solve(p));
  return 2.0 * m.transpose();
}

double noise_distortion_derivative(const Metric& c, const MatrixRef& a, const MatrixRef& noise,
                                   const MatrixRef& direction) {
  if (direction.rows() != a.rows() || direction.cols() != a.cols()) {
    throw Error(ErrorCode::kDimensionMismatch, "direction must have the shape of the candidate");
  }
  return noise_distortion_gradient(c, a, noise).cwiseProduct(direction).sum();
}

double noise_distortion_central_difference(const Metric& c, const MatrixRef& a, const MatrixRef& noise,
                                           const MatrixRef& direction) {
  const double bn = direction.norm();
  if (bn == 0.0) return 0.0;
  const double h = 1e-5 * a.norm() / bn;
  const Matrix plus = a + h * direction;
  const Matrix minus = a - h * direction;
  return (noise_distortion(c, plus, noise) - noise_distortion(c, minus, noise)) / (2.0 * h);
}

KernelInvarianceResult kernel_invariance_check(const Metric& c, const MatrixRef& noise, const MatrixRef& a,
                                               std::uint64_t seed, int directions) {
  require_noise(c, noise);
  if (!linalg::full_column_rank(a)) {
    throw Error(ErrorCode::kDegenerateCandidate, "kernel invariance needs a full-rank candidate");
  }
  const Index n = a.rows();
  const Index k = a.cols();
  KernelInvarianceResult out;

  if (k < n) {
    Eigen::HouseholderQR<Matrix> qr(a);
    const Matrix q = qr.householderQ() * Matrix::Identity(n, n);
    const Matrix cn_ker = c.matrix() * noise * q.rightCols(n - k);
    const double denom = cn_ker.norm();
    out.kernel_leak = denom > 0.0 ? (q.leftCols(k).transpose() * cn_ker).norm() / denom : 0.0;
  }
  out.invariant = out.kernel_leak <= kKernelLeakTol;

  const Matrix grad = noise_distortion_gradient(c, a, noise);
  out.scale = noise_distortion(c, a, noise) / a.norm();
  Rng rng = make_rng(seed, 0);
  for (int i = 0; i < directions; ++i) {
    Matrix b = gaussian_matrix(rng, n, k);
    b /= b.norm();
    out.max_directional = std::max(out.max_directional, std::abs(grad.cwiseProduct(b).sum()));
  }
  out.gradient_vanishes = out.max_directional <= kVanishingGradientTol * out.scale;
  return out;
}

std::vector<SufficiencyRun> whitening_sufficiency(const sim::SourceScenario& sc, const sim::CandidateGrid& grid,
                                                  const std::vector<double>& alphas) {
  sim::validate(sc);
  const Vector x = sim::effective_source(sc);
  const auto truth = sim::find_candidate(grid, sc.leadfield);
  std::vector<SufficiencyRun> runs;
  for (double alpha : alphas) {
    if (!(alpha > 0.0)) throw Error(ErrorCode::kInvalidArgument, "whitening scale must be positive");
    const Metric c = scaled_inverse_noise(sc.noise_cov, alpha);
    SufficiencyRun run;
    run.alpha = alpha;
    run.truth = truth;
    // Maximizing the expected power is minimizing E[rv]: E|d|_C^2 does not depend on A.
    double best = -std::numeric_limits<double>::infinity();
    double second = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < grid.size(); ++i) {
      double total;
      try {
        total = expected_power_terms(c, grid.candidates[i].leadfield, x, sc.noise_cov).total;
      } catch (const Error& e) {
        if (e.code() != ErrorCode::kDegenerateCandidate) throw;
        continue;
      }
      if (total > best) {
        second = best;
        best = total;
        run.argmin = i;
      } else if (total > second) {
        second = total;
      }
    }
    run.margin = best - second;
    run.pass = run.argmin.has_value() && run.argmin == truth && run.margin > 0.0;
    runs.push_back(run);
  }
  return runs;
}

double whitening_defect(const Metric& c, const MatrixRef& noise) {
  require_noise(c, noise);
  const Matrix m = c.matrix() * noise;
  const double mean_diag = m.trace() / static_cast<double>(m.rows());
  if (!(mean_diag > 0.0)) return std::numeric_limits<double>::infinity();
  return (m / mean_diag - Matrix::Identity(m.rows(), m.cols())).norm();
}

NecessityWitness necessity_witness(const sim::SourceScenario& sc, const Metric& c) {
  sim::validate(sc);
  if (whitening_defect(c, sc.noise_cov) <= kWhiteningTol) {
    throw Error(ErrorCode::kWhiteningMetric, "C is a positive multiple of N^-1; no witness can exist");
  }
  const Matrix& l0 = sc.leadfield;
  const Vector x = sim::effective_source(sc);

  NecessityWitness out;
  const Matrix grad = noise_distortion_gradient(c, l0, sc.noise_cov);
  out.gradient_norm = grad.norm();
  const double scale = noise_distortion(c, l0, sc.noise_cov) / l0.norm();
  if (out.gradient_norm <= kVanishingGradientTol * scale) {
    throw Error(ErrorCode::kNoWitness, "no witness found - invariant subspace case");
  }
  const Matrix direction = grad * (l0.norm() / out.gradient_norm);
  out.total_truth = expected_power_terms(c, l0, x, sc.noise_cov).total;

  double t = 1e-2;
  for (int attempt = 0; attempt < 60; ++attempt, t *= 0.5) {
    const Matrix a = l0 + t * direction;
    double total;
    try {
      total = expected_power_terms(c, a, x, sc.noise_cov).total;
    } catch (const Error& e) {
      if (e.code() != ErrorCode::kDegenerateCandidate) throw;
      continue;
    }
    if (total > out.total_truth) {
      out.leadfield = a;
      out.step = t;
      out.total_witness = total;
      out.improvement = total - out.total_truth;
      out.rv_truth = expected_residual_variance(c, l0, sc);
      out.rv_witness = expected_residual_variance(c, a, sc);
      return out;
    }
  }
  throw Error(ErrorCode::kNoWitness, "no witness found - backtracking exhausted");
}

BeamformerCheck certify_beamformer_gof(const sim::SourceScenario& sc, const sim::CandidateGrid& grid) {
  const sim::CovariancePair cp = sim::analytic_covariance(sc);
  const beam::CovarianceModel model = beam::CovarianceModel::from_pair(cp);
  const Vector& x = *cp.source;

  BeamformerCheck out;
  out.constants = beam::derived_constants(model.noise_inv, x);
  const double unit = 1.0 + out.constants.q;
  out.truth = sim::find_candidate(grid, sc.leadfield);

  const std::size_t count = grid.size();
  std::vector<double> gofs(count, 0.0), nai(count, 0.0), sam(count, 0.0);
  std::vector<bool> skip(count, false);
  for (std::size_t i = 0; i < count; ++i) {
    const Matrix& l = grid.candidates[i].leadfield;
    BeamformerCheckRow row;
    row.id = grid.candidates[i].id;
    row.k = l.cols();
    try {
      row.gof = scan::weighted_ls_fit(model.noise_inv, l, x).gof;
      row.p_nai = beam::power_nai_vector(model.signal_inv, model.noise_inv, l);
      row.p_sam = beam::power_sam_vector(model.signal_inv, model.noise, l);
      const double k = static_cast<double>(row.k);
      row.nai_deviation = std::abs(row.p_nai - k - beam::nai_excess(out.constants, row.gof));
      row.sam_deviation = std::abs(row.p_sam - k - beam::sam_excess(out.constants, row.gof));
      row.transform_deviation =
          std::abs(beam::nai_to_sam_excess(out.constants, row.p_nai - k) - (row.p_sam - k));
      gofs[i] = row.gof;
      nai[i] = row.p_nai - k;
      sam[i] = row.p_sam - k;
      out.max_identity_deviation =
          std::max({out.max_identity_deviation, row.nai_deviation / unit, row.sam_deviation / unit});
      out.max_transform_deviation = std::max(out.max_transform_deviation, row.transform_deviation / unit);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::kDegenerateCandidate) throw;
      row.flags |= scan::kFlagDegenerate;
      skip[i] = true;
    }
    out.rows.push_back(std::move(row));
  }

  out.argmax_gof = scan::argmax_with_ties(gofs, skip, scan::kTieTolerance).first;
  out.argmax_nai = scan::argmax_with_ties(nai, skip, scan::kTieTolerance * unit).first;
  out.argmax_sam = scan::argmax_with_ties(sam, skip, scan::kTieTolerance * unit).first;
  out.argmax_agree = out.argmax_gof == out.argmax_nai && out.argmax_gof == out.argmax_sam;

  for (std::size_t i = 0; i < count; ++i) {
    for (std::size_t j = i + 1; j < count; ++j) {
      if (skip[i] || skip[j] || out.rows[i].k != out.rows[j].k) continue;
      const int sg = sign_with_band(gofs[i] - gofs[j], kOrderingTieBand);
      const int sn = sign_with_band(nai[i] - nai[j], kOrderingTieBand * unit);
      const int ss = sign_with_band(sam[i] - sam[j], kOrderingTieBand * unit);
      const bool clash = (sg * sn < 0) || (sg * ss < 0) || (sn * ss < 0);
      if (clash) ++out.ordering_violations;
    }
  }
  return out;
}

BiasConstruction tilde_nai_bias(const sim::SourceScenario& sc, bool refine) {
  sim::validate(sc);
  if (!(sc.q2 > 0.0)) throw Error(ErrorCode::kNoSource, "no source: the construction needs q2 > 0");

  const Metric noise(sc.noise_cov);
  const Matrix half = linalg::psd_power(noise, 0.5).matrix();
  const Matrix inv_half = linalg::psd_power(noise, -0.5).matrix();
  const Matrix& l0 = sc.leadfield;

  BiasConstruction out;
  Eigen::JacobiSVD<Matrix> svd(inv_half * l0, Eigen::ComputeThinU | Eigen::ComputeThinV);
  out.u = svd.matrixU();
  out.v_factor = svd.matrixV();
  out.singular_values = svd.singularValues();
  out.v = out.singular_values.asDiagonal() * (out.v_factor.transpose() * sc.eta);

  const Vector mag = out.v.cwiseAbs();
  const double top = mag.maxCoeff();
  if (top - mag.minCoeff() <= kBalanceTol * top) {
    throw Error(ErrorCode::kBalancedCase, "balanced case - no construction");
  }
  mag.minCoeff(&out.decreased);
  mag.maxCoeff(&out.increased);

  const Vector inv_sq = out.singular_values.array().square().inverse().matrix();
  const ExactShift shift =
      exact_shift(inv_sq(out.decreased), inv_sq(out.increased), 0.5 * inv_sq.minCoeff());
  Vector tilted_inv_sq = inv_sq;
  tilted_inv_sq(out.decreased) = shift.lowered;
  tilted_inv_sq(out.increased) = shift.raised;
  out.epsilon = shift.epsilon;
  out.trace_preserved_exactly = shift.exact;
  auto pair_first_sum = [&](const Vector& w) {
    double total = w(out.decreased) + w(out.increased);
    for (Index l = 0; l < w.size(); ++l) {
      if (l != out.decreased && l != out.increased) total += w(l);
    }
    return total;
  };
  out.trace_before = pair_first_sum(inv_sq);
  out.trace_after = pair_first_sum(tilted_inv_sq);
  out.tilted_singular_values = tilted_inv_sq.array().rsqrt().matrix();

  out.leadfield = half * out.u * out.tilted_singular_values.asDiagonal() * out.v_factor.transpose();

  const beam::CovarianceModel model = beam::CovarianceModel::from_pair(sim::analytic_covariance(sc));
  const Vector x = sim::effective_source(sc);
  out.nai_before = beam::nai_tilde(model.signal_inv, model.noise_inv, l0);
  out.nai_after = beam::nai_tilde(model.signal_inv, model.noise_inv, out.leadfield);
  out.gof_truth = scan::weighted_ls_fit(model.noise_inv, l0, x).gof;
  out.gof_tilde = scan::weighted_ls_fit(model.noise_inv, out.leadfield, x).gof;

  if (!refine) return out;
  Rng rng = make_rng(sc.seed, 1);
  const double base = out.leadfield.norm();
  double size = 0.1;
  for (int draw = 0; draw < kRefinementDraws; ++draw, size *= 0.7) {
    Matrix z = gaussian_matrix(rng, l0.rows(), l0.cols());
    const Matrix candidate = out.leadfield + (size * base / z.norm()) * z;
    out.refinement_draws = draw + 1;
    if (!linalg::full_column_rank(candidate)) continue;
    const double gof = scan::weighted_ls_fit(model.noise_inv, candidate, x).gof;
    const double nai = beam::nai_tilde(model.signal_inv, model.noise_inv, candidate);
    if (gof < out.gof_truth - 1e-12 && nai > out.nai_before) {
      out.refined = true;
      out.refined_leadfield = candidate;
      out.refined_gof = gof;
      out.refined_nai = nai;
      break;
    }
  }
  return out;
}

MonteCarloEstimate monte_carlo_sloreta_power(const Metric& c, const MatrixRef& a, const sim::SourceScenario& sc,
                                             std::size_t samples) {
  if (samples < 2) throw Error(ErrorCode::kInvalidArgument, "Monte Carlo needs at least two samples");
  const Gram gr = gram(c, a);
  const Matrix d = sim::simulate_samples(sc, samples);
  const Matrix y = gr.llt.matrixL().solve(gr.ca.transpose() * d);
  const Eigen::ArrayXd power = y.colwise().squaredNorm().transpose().array();

  MonteCarloEstimate out;
  out.samples = samples;
  out.mean = power.mean();
  const double var = (power - out.mean).square().sum() / static_cast<double>(samples - 1);
  out.standard_error = std::sqrt(var / static_cast<double>(samples));
  return out;
}

}  // namespace dipscan::lab
