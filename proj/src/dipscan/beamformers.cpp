#include "dipscan/beamformers.hpp"

#include <algorithm>
#include <cmath>

#include "dipscan/error.hpp"

namespace dipscan::beam {

namespace {

double constraint_gain(const Metric& r_inv, const VectorRef& l) {
  if (l.size() != r_inv.dim()) throw Error(ErrorCode::kDimensionMismatch, "leadfield does not match covariance");
  if (l.squaredNorm() == 0.0) throw Error(ErrorCode::kNullConstraint, "null constraint leadfield");
  const double gain = linalg::metric_norm_sq(r_inv, l);
  if (!(gain > 0.0)) throw Error(ErrorCode::kNullConstraint, "null constraint leadfield: l^T R^-1 l = 0");
  return gain;
}

void require_candidate(const Metric& m, const MatrixRef& l) {
  if (l.rows() != m.dim() || l.cols() == 0) {
    throw Error(ErrorCode::kDimensionMismatch, "candidate does not match covariance dimension");
  }
  if (!linalg::full_column_rank(l)) {
    throw Error(ErrorCode::kDegenerateCandidate, "degenerate candidate: leadfield not full column rank");
  }
}

Eigen::LLT<Matrix> factor(const Matrix& gram) {
  Eigen::LLT<Matrix> llt(0.5 * (gram + gram.transpose()));
  if (llt.info() != Eigen::Success) {
    throw Error(ErrorCode::kDegenerateCandidate, "degenerate candidate: Gram matrix not positive definite");
  }
  return llt;
}

double clamp_unit(double t) {
  if (!(t >= -kDomainSlack && t <= 1.0 + kDomainSlack)) {
    throw Error(ErrorCode::kDomain, "argument " + linalg::format_double(t) + " outside [0, 1]");
  }
  return std::clamp(t, 0.0, 1.0);
}

}  // namespace

BeamformerWeights filter_weights(const Metric& r_inv, const VectorRef& l, double tau) {
  if (!(tau > 0.0)) throw Error(ErrorCode::kInvalidArgument, "beamformer tau must be positive");
  const double gain = constraint_gain(r_inv, l);
  BeamformerWeights out;
  out.w = (tau / gain) * (r_inv.matrix() * l);
  out.tau = tau;
  out.constraint_leadfield = l;
  return out;
}

double power_ug(const Metric& r_inv, const VectorRef& l) {
  return 1.0 / constraint_gain(r_inv, l);
}

double power_nai_scalar(const Metric& r_inv, const Metric& n_inv, const VectorRef& l) {
  const double gain = constraint_gain(r_inv, l);
  return linalg::metric_norm_sq(n_inv, l) / gain;
}

double power_sam_scalar(const Metric& r_inv, const Metric& noise, const VectorRef& l) {
  const double gain = constraint_gain(r_inv, l);
  const Vector u = r_inv.matrix() * l;
  return gain / linalg::metric_norm_sq(noise, u);
}

double power_ug_vector(const Metric& r_inv, const MatrixRef& l) {
  require_candidate(r_inv, l);
  const Matrix gr = l.transpose() * r_inv.matrix() * l;
  const Index k = l.cols();
  return factor(gr).solve(Matrix::Identity(k, k)).trace();
}

double power_nai_vector(const Metric& r_inv, const Metric& n_inv, const MatrixRef& l) {
  require_candidate(r_inv, l);
  const Matrix gr = l.transpose() * r_inv.matrix() * l;
  const Matrix gn = l.transpose() * n_inv.matrix() * l;
  // Tr(GN GR^{-1}) = Tr(GR^{-1} GN) by cyclicity.
  return factor(gr).solve(gn).trace();
}

double power_sam_vector(const Metric& r_inv, const Metric& noise, const MatrixRef& l) {
  require_candidate(r_inv, l);
  const Matrix u = r_inv.matrix() * l;
  const Matrix gr = l.transpose() * u;
  const Matrix gs = u.transpose() * noise.matrix() * u;
  return factor(gs).solve(0.5 * (gr + gr.transpose())).trace();
}

double nai_tilde(const Metric& r_inv, const Metric& n_inv, const MatrixRef& l) {
  require_candidate(r_inv, l);
  const Index k = l.cols();
  const Matrix gr = l.transpose() * r_inv.matrix() * l;
  const Matrix gn = l.transpose() * n_inv.matrix() * l;
  const double signal = factor(gr).solve(Matrix::Identity(k, k)).trace();
  const double noise = factor(gn).solve(Matrix::Identity(k, k)).trace();
  return signal / noise;
}

DerivedConstants derived_constants_from_q(double q) {
  if (!(q > 0.0) || !std::isfinite(q)) throw Error(ErrorCode::kNoSource, "no source: <N^-1 x, x> must be positive");
  DerivedConstants dc;
  dc.q = q;
  dc.mu = q / (1.0 + q);
  dc.rho = (q * q + 2.0 * q) / ((q + 1.0) * (q + 1.0));
  return dc;
}

DerivedConstants derived_constants(const Metric& n_inv, const VectorRef& x) {
  if (x.size() != n_inv.dim()) throw Error(ErrorCode::kDimensionMismatch, "source does not match noise dimension");
  if (x.squaredNorm() == 0.0) throw Error(ErrorCode::kNoSource, "no source: x = 0");
  return derived_constants_from_q(linalg::metric_norm_sq(n_inv, x));
}

double nai_excess(const DerivedConstants& dc, double gof) {
  const double t = clamp_unit(gof);
  return dc.mu * t / (1.0 - dc.mu * t);
}

double sam_excess(const DerivedConstants& dc, double gof) {
  const double t = clamp_unit(gof);
  return (1.0 / (dc.q + 2.0)) * (1.0 / (1.0 - dc.rho * t) - 1.0);
}

double gof_from_nai_excess(const DerivedConstants& dc, double excess) {
  if (excess < -kDomainSlack * (1.0 + dc.q)) {
    throw Error(ErrorCode::kDomain, "negative NAI excess " + linalg::format_double(excess));
  }
  excess = std::max(excess, 0.0);
  return excess / (dc.mu * (1.0 + excess));
}

double nai_to_sam_excess(const DerivedConstants& dc, double nai_excess_value) {
  return sam_excess(dc, gof_from_nai_excess(dc, nai_excess_value));
}

CovarianceModel CovarianceModel::from_pair(const sim::CovariancePair& cp) {
  Metric noise(cp.noise);
  Metric noise_inv = linalg::psd_power(noise, -1.0);
  Metric signal_inv = linalg::psd_power(Metric(cp.signal), -1.0);
  return CovarianceModel{std::move(signal_inv), std::move(noise), std::move(noise_inv)};
}

scan::BeamformerColumns beamformer_columns(const CovarianceModel& model, const MatrixRef& l) {
  scan::BeamformerColumns out;
  out.p_ug = power_ug_vector(model.signal_inv, l);
  out.p_nai = power_nai_vector(model.signal_inv, model.noise_inv, l);
  out.p_sam = power_sam_vector(model.signal_inv, model.noise, l);
  out.nai_tilde = nai_tilde(model.signal_inv, model.noise_inv, l);
  return out;
}

void attach_beamformer_columns(scan::ScanReport& report, const sim::CandidateGrid& grid,
                               const CovarianceModel& model) {
  for (std::size_t i = 0; i < report.entries.size(); ++i) {
    auto& entry = report.entries[i];
    try {
      entry.beamformer = beamformer_columns(model, grid.candidates[i].leadfield);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::kDegenerateCandidate) throw;
      entry.flags |= scan::kFlagDegenerate;
    }
  }
}

}  // namespace dipscan::beam
