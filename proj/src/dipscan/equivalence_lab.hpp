#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "dipscan/beamformers.hpp"
#include "dipscan/forward_sim.hpp"
#include "dipscan/inverse_scan.hpp"
#include "dipscan/linalg.hpp"

namespace dipscan::lab {

using linalg::Metric;

/// Analytic E[|j_sLORETA(d, A)|^2] for d = x s + n, split into the source
/// and the noise contribution.
struct ExpectedScanObjective {
  double signal_term = 0;  // x^T C A (A^T C A)^{-1} A^T C x
  double noise_term = 0;   // Tr((A^T C A)^{-1} A^T C N C A)
  double total = 0;
};

ExpectedScanObjective expected_power_terms(const Metric& c, const MatrixRef& a, const VectorRef& x,
                                           const MatrixRef& noise);
ExpectedScanObjective expected_power_terms(const Metric& c, const MatrixRef& a,
                                           const sim::SourceScenario& sc);

/// E[|d|_C^2] - E[|j_sLORETA|^2], the expected minimal residual variance.
double expected_residual_variance(const Metric& c, const MatrixRef& a, const sim::SourceScenario& sc);

// --- noise distortion g(A) = Tr((A^T C A)^{-1} A^T C N C A) ------------------

double noise_distortion(const Metric& c, const MatrixRef& a, const MatrixRef& noise);

/// Directional derivative Dg(A)(B). Throws kDegenerateCandidate for rank-deficient A.
double noise_distortion_derivative(const Metric& c, const MatrixRef& a, const MatrixRef& noise,
                                   const MatrixRef& direction);

/// Gradient of g with respect to the Frobenius inner product, so that
/// Dg(A)(B) = sum(gradient .* B).
Matrix noise_distortion_gradient(const Metric& c, const MatrixRef& a, const MatrixRef& noise);

/// Central difference (g(A+hB) - g(A-hB)) / 2h with h = 1e-5 |A|_F / |B|_F.
double noise_distortion_central_difference(const Metric& c, const MatrixRef& a, const MatrixRef& noise,
                                           const MatrixRef& direction);

struct KernelInvarianceResult {
  bool invariant = false;        // C N Ker(A^T) within Ker(A^T)
  double kernel_leak = 0;        // |Q_range^T C N Q_ker|_F / |C N Q_ker|_F
  double max_directional = 0;    // max |Dg(A)(B)| over the random directions
  double scale = 0;              // g(A) |B|_F / |A|_F
  bool gradient_vanishes = false;
  bool consistent() const { return invariant == gradient_vanishes; }
};

inline constexpr double kKernelLeakTol = 1e-9;
inline constexpr double kVanishingGradientTol = 1e-8;

/// Compares the subspace condition with the numerical gradient probed along
/// `directions` random unit directions drawn from (seed, 0).
KernelInvarianceResult kernel_invariance_check(const Metric& c, const MatrixRef& noise, const MatrixRef& a,
                                               std::uint64_t seed = 0, int directions = 50);

// --- whitening sufficiency ----------------------------------------------------

struct SufficiencyRun {
  double alpha = 0;
  std::optional<std::size_t> argmin;
  std::optional<std::size_t> truth;
  double margin = 0;  // runner-up E[rv] minus the minimum; +inf for one candidate
  bool pass = false;
};

/// Analytic E[rv] scan with C = alpha N^{-1} for every alpha.
std::vector<SufficiencyRun> whitening_sufficiency(const sim::SourceScenario& sc, const sim::CandidateGrid& grid,
                                                  const std::vector<double>& alphas);

// --- necessity witness ---------------------------------------------------------

struct NecessityWitness {
  Matrix leadfield;        // A with larger expected sLORETA power than L0
  double step = 0;         // t in A = L0 + t G / |G|_F |L0|_F
  double gradient_norm = 0;
  double total_truth = 0;
  double total_witness = 0;
  double improvement = 0;  // total_witness - total_truth
  double rv_truth = 0;     // expected residual variances, plug-back check
  double rv_witness = 0;
};

/// Relative Frobenius distance of C N / (Tr(C N) / n) from the identity.
double whitening_defect(const Metric& c, const MatrixRef& noise);
inline constexpr double kWhiteningTol = 1e-10;

/// Gradient ascent from L0 along the gradient of the noise distortion.
/// Throws kWhiteningMetric when C is a positive multiple of N^{-1} and
/// kNoWitness when the gradient vanishes or backtracking fails.
NecessityWitness necessity_witness(const sim::SourceScenario& sc, const Metric& c);

// --- beamformer / GOF certification --------------------------------------------

struct BeamformerCheckRow {
  std::string id;
  Index k = 0;
  unsigned flags = scan::kFlagNone;
  double gof = 0;          // GOF_{N^-1}(x, L)
  double p_nai = 0;
  double p_sam = 0;
  double nai_deviation = 0;        // |P_NAI - k - f(gof)|
  double sam_deviation = 0;        // |P_SAM - k - g(gof)|
  double transform_deviation = 0;  // |h(P_NAI - k) - (P_SAM - k)|
};

struct BeamformerCheck {
  beam::DerivedConstants constants;
  std::vector<BeamformerCheckRow> rows;
  double max_identity_deviation = 0;   // over nai/sam deviations
  double max_transform_deviation = 0;
  std::optional<std::size_t> argmax_gof, argmax_nai, argmax_sam;
  std::optional<std::size_t> truth;
  std::size_t ordering_violations = 0;
  bool argmax_agree = false;
};

/// Pairs closer than this (relative to 1 + q for powers, absolute for GOF)
/// count as tied when comparing orderings.
inline constexpr double kOrderingTieBand = 1e-12;

/// Checks P - k against the GOF maps for every candidate of an analytic
/// single-source covariance.
BeamformerCheck certify_beamformer_gof(const sim::SourceScenario& sc, const sim::CandidateGrid& grid);

// --- tilde-NAI bias construction -----------------------------------------------

struct BiasConstruction {
  Matrix u, v_factor;            // thin SVD of N^{-1/2} L0
  Vector singular_values;        // s
  Vector tilted_singular_values; // s tilde
  Vector v;                      // S V^T eta
  Index decreased = 0;           // i: |v_i| minimal
  Index increased = 0;           // j: |v_j| maximal
  double epsilon = 0;
  bool trace_preserved_exactly = false;
  double trace_before = 0, trace_after = 0;  // sum s^-2 and sum s tilde^-2
  Matrix leadfield;              // L tilde
  double nai_before = 0, nai_after = 0;
  double gof_tilde = 0;          // GOF_{N^-1}(x, L tilde)

  bool refined = false;
  int refinement_draws = 0;
  Matrix refined_leadfield;
  double refined_nai = 0;
  double refined_gof = 0;
  double gof_truth = 0;
};

inline constexpr double kBalanceTol = 1e-9;
inline constexpr int kRefinementDraws = 50;

/// Throws kBalancedCase when all |v_i| agree within kBalanceTol relative.
/// The refinement perturbs L tilde with draws from (sc.seed, 1).
BiasConstruction tilde_nai_bias(const sim::SourceScenario& sc, bool refine = true);

// --- Monte Carlo cross-check -----------------------------------------------------

struct MonteCarloEstimate {
  double mean = 0;
  double standard_error = 0;
  std::size_t samples = 0;
};

/// Empirical mean of |j_sLORETA(d_t, A)|^2 over simulated samples of `sc`.
MonteCarloEstimate monte_carlo_sloreta_power(const Metric& c, const MatrixRef& a, const sim::SourceScenario& sc,
                                             std::size_t samples);

}  // namespace dipscan::lab
