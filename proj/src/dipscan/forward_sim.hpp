#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "dipscan/linalg.hpp"
#include "dipscan/random.hpp"

namespace dipscan::sim {

/// Single dipolar source with additive uncorrelated noise:
/// d(t) = L0 (s(t) eta) + n(t), E[s^2] = q2, Cov(n) = noise_cov.
struct SourceScenario {
  Matrix leadfield;   // L0, N x 3
  Vector eta;         // unit orientation
  double q2 = 1.0;    // E[s(t)^2]; zero describes the no-source case
  Matrix noise_cov;   // SPD, N x N
  std::uint64_t seed = 0;

  Index sensors() const { return leadfield.rows(); }
};

/// Throws kInvalidArgument / kDimensionMismatch / kNotPositiveSemidefinite
/// when the scenario breaks its invariants.
void validate(const SourceScenario& sc);

struct Candidate {
  std::string id;
  Matrix leadfield;  // N x k
};

struct CandidateGrid {
  std::vector<Candidate> candidates;
  Index sensor_count = 0;

  std::size_t size() const { return candidates.size(); }
};

/// Checks full column rank, matching row counts and unique ids.
void validate(const CandidateGrid& grid);

/// Index of the first candidate whose leadfield equals `leadfield` exactly.
std::optional<std::size_t> find_candidate(const CandidateGrid& grid, const MatrixRef& leadfield);

enum class Provenance { kAnalytic, kSample };

struct CovariancePair {
  Matrix signal;  // R = E[d d^T]
  Matrix noise;   // N
  Provenance provenance = Provenance::kAnalytic;
  std::size_t sample_count = 0;     // for kSample
  std::optional<Vector> source;     // x, recorded for kAnalytic
};

/// x = sqrt(q2) L0 eta.
Vector effective_source(const SourceScenario& sc);

/// N x T samples. Columns are produced in blocks of kSampleBlock; every block
/// draws from its own stream derived from (derive_seed(seed, kSampleStream),
/// block index), so results do not depend on the thread schedule.
inline constexpr std::size_t kSampleBlock = 1024;
inline constexpr std::uint64_t kSampleStream = 0x53414d50;
Matrix simulate_samples(const SourceScenario& sc, std::size_t samples);

/// R = N + x x^T.
CovariancePair analytic_covariance(const SourceScenario& sc);

struct SampleCovariance {
  Matrix matrix;
  bool full_rank = false;  // rank-deficient results must not be inverted
};

/// (1/T) sum_t d_t d_t^T, symmetrized. Throws kInsufficientSamples when T < N.
SampleCovariance sample_covariance(const MatrixRef& samples);

/// Sample-based pair: R estimated from `samples` draws, N taken from the scenario.
CovariancePair sample_covariance_pair(const SourceScenario& sc, std::size_t samples);

/// Unit vector spanning R x, recovered from R and N through the top
/// eigenvector of N^{-1/2} R N^{-1/2}. Sign: first nonzero component positive.
Vector recover_source_direction(const CovariancePair& cp);

// Seeded generators used by the experiments and tests.

enum class NoiseKind { kWhite, kRandomSpd, kExplicit };

struct NoiseSpec {
  NoiseKind kind = NoiseKind::kRandomSpd;
  double sigma = 1.0;       // white: sigma^2 I; random_spd: spectrum scale sigma^2
  Matrix explicit_matrix;   // kExplicit
};

Matrix make_noise(Rng& rng, Index sensors, const NoiseSpec& spec);

/// Gaussian L0, random unit eta, noise per spec. Fully determined by seed.
SourceScenario random_scenario(std::uint64_t seed, Index sensors, const NoiseSpec& noise, double q2 = 1.0);

/// `count` random N x k candidates with ids "c0".."c{count-1}", with the
/// given leadfield inserted at `true_position` under id "true".
CandidateGrid random_grid_with(Rng& rng, Index sensors, Index k, std::size_t count,
                               const MatrixRef& true_leadfield, std::size_t true_position);

/// Complete leadfield (N x 3M) with average-referenced columns.
Matrix random_complete_leadfield(Rng& rng, Index sensors, Index locations);

/// Splits a complete leadfield into consecutive k-column candidates "loc0"...
CandidateGrid grid_from_complete_leadfield(const MatrixRef& complete, Index k);

}  // namespace dipscan::sim
