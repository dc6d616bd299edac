#pragma once

#include "dipscan/forward_sim.hpp"
#include "dipscan/inverse_scan.hpp"
#include "dipscan/linalg.hpp"

namespace dipscan::beam {

using linalg::Metric;

/// Minimum-variance filter w = argmin_{w^T l = tau} w^T R w.
struct BeamformerWeights {
  Vector w;
  double tau = 1.0;
  Vector constraint_leadfield;
};

/// w = tau R^{-1} l / (l^T R^{-1} l). Throws kNullConstraint for l = 0.
BeamformerWeights filter_weights(const Metric& r_inv, const VectorRef& l, double tau);

// Scalar powers. AG and UNG are NAI and SAM evaluated with N = sigma^2 I.

/// 1 / (l^T R^{-1} l)
double power_ug(const Metric& r_inv, const VectorRef& l);
/// (l^T N^{-1} l) / (l^T R^{-1} l)
double power_nai_scalar(const Metric& r_inv, const Metric& n_inv, const VectorRef& l);
/// (l^T R^{-1} l) / (l^T R^{-1} N R^{-1} l)
double power_sam_scalar(const Metric& r_inv, const Metric& noise, const VectorRef& l);

// Vector powers for an N x k candidate. All reduce to the scalar forms at k = 1.
// Rank-deficient candidates throw kDegenerateCandidate.

/// Tr((L^T R^{-1} L)^{-1})
double power_ug_vector(const Metric& r_inv, const MatrixRef& l);
/// Tr((L^T N^{-1} L)(L^T R^{-1} L)^{-1})
double power_nai_vector(const Metric& r_inv, const Metric& n_inv, const MatrixRef& l);
/// Tr((L^T R^{-1} L)(L^T R^{-1} N R^{-1} L)^{-1})
double power_sam_vector(const Metric& r_inv, const Metric& noise, const MatrixRef& l);
/// Trace-ratio activity index Tr((L^T R^{-1} L)^{-1}) / Tr((L^T N^{-1} L)^{-1}).
double nai_tilde(const Metric& r_inv, const Metric& n_inv, const MatrixRef& l);

/// Constants of the single-source model R = N + x x^T.
struct DerivedConstants {
  double q = 0;    // <N^{-1} x, x>
  double mu = 0;   // q / (1 + q)
  double rho = 0;  // (q^2 + 2q) / (q + 1)^2
};

/// Throws kNoSource for x = 0.
DerivedConstants derived_constants(const Metric& n_inv, const VectorRef& x);
DerivedConstants derived_constants_from_q(double q);

/// Slack allowed on [0, 1] arguments and on nonnegative excesses before a
/// domain error is raised; values inside the slack are clamped.
inline constexpr double kDomainSlack = 1e-10;

/// P_NAI - k as a function of GOF_{N^-1}(x, L): mu t / (1 - mu t).
double nai_excess(const DerivedConstants& dc, double gof);
/// P_SAM - k as a function of GOF_{N^-1}(x, L): (1/(q+2)) (1/(1 - rho t) - 1).
double sam_excess(const DerivedConstants& dc, double gof);
/// Inverse of nai_excess.
double gof_from_nai_excess(const DerivedConstants& dc, double excess);
/// Monotone map from P_NAI - k to P_SAM - k.
double nai_to_sam_excess(const DerivedConstants& dc, double nai_excess_value);

/// Pre-factorized covariance pair shared by every candidate of a scan.
struct CovarianceModel {
  Metric signal_inv;  // R^{-1}
  Metric noise;       // N
  Metric noise_inv;   // N^{-1}

  static CovarianceModel from_pair(const sim::CovariancePair& cp);
};

scan::BeamformerColumns beamformer_columns(const CovarianceModel& model, const MatrixRef& l);

/// Adds beamformer columns to every unflagged entry of a scan report.
void attach_beamformer_columns(scan::ScanReport& report, const sim::CandidateGrid& grid,
                               const CovarianceModel& model);

}  // namespace dipscan::beam
