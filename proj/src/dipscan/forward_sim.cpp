#include "dipscan/forward_sim.hpp"

#include <cmath>
#include <set>

#include "dipscan/error.hpp"
#include "dipscan/parallel.hpp"

namespace dipscan::sim {

using linalg::Metric;

void validate(const SourceScenario& sc) {
  const Index n = sc.leadfield.rows();
  if (n == 0 || sc.leadfield.cols() != 3) {
    throw Error(ErrorCode::kDimensionMismatch, "scenario leadfield must be N x 3");
  }
  if (!linalg::full_column_rank(sc.leadfield)) {
    throw Error(ErrorCode::kDegenerateCandidate, "scenario leadfield is not full column rank");
  }
  if (sc.eta.size() != 3 || std::abs(sc.eta.norm() - 1.0) > 1e-12) {
    throw Error(ErrorCode::kInvalidArgument, "scenario orientation must be a unit 3-vector");
  }
  if (!(sc.q2 >= 0.0) || !std::isfinite(sc.q2)) {
    throw Error(ErrorCode::kInvalidArgument, "scenario source power must be finite and nonnegative");
  }
  if (sc.noise_cov.rows() != n || sc.noise_cov.cols() != n) {
    throw Error(ErrorCode::kDimensionMismatch, "noise covariance must be N x N");
  }
  const Metric noise(sc.noise_cov);
  if (noise.has_kernel()) {
    throw Error(ErrorCode::kSingularMetric, "noise covariance must be positive definite");
  }
}

void validate(const CandidateGrid& grid) {
  std::set<std::string> ids;
  for (const auto& c : grid.candidates) {
    if (!ids.insert(c.id).second) {
      throw Error(ErrorCode::kInvalidArgument, "duplicate candidate id '" + c.id + "'");
    }
    if (c.leadfield.rows() != grid.sensor_count) {
      throw Error(ErrorCode::kDimensionMismatch, "candidate '" + c.id + "' has wrong sensor count");
    }
    if (!linalg::full_column_rank(c.leadfield)) {
      throw Error(ErrorCode::kDegenerateCandidate, "candidate '" + c.id + "' is not full column rank");
    }
  }
}

std::optional<std::size_t> find_candidate(const CandidateGrid& grid, const MatrixRef& leadfield) {
  for (std::size_t i = 0; i < grid.candidates.size(); ++i) {
    const Matrix& l = grid.candidates[i].leadfield;
    if (l.rows() == leadfield.rows() && l.cols() == leadfield.cols() && l == leadfield) return i;
  }
  return std::nullopt;
}

Vector effective_source(const SourceScenario& sc) {
  return std::sqrt(sc.q2) * (sc.leadfield * sc.eta);
}

Matrix simulate_samples(const SourceScenario& sc, std::size_t samples) {
  validate(sc);
  if (samples == 0) throw Error(ErrorCode::kInvalidArgument, "sample count must be positive");

  const Index n = sc.sensors();
  const Matrix coloring = linalg::psd_power(Metric(sc.noise_cov), 0.5).matrix();
  const Vector direction = sc.leadfield * sc.eta;
  const double amplitude_scale = std::sqrt(sc.q2);
  const std::uint64_t sample_master = derive_seed(sc.seed, kSampleStream);

  Matrix out(n, static_cast<Index>(samples));
  const std::size_t blocks = (samples + kSampleBlock - 1) / kSampleBlock;
  parallel_for(blocks, [&](std::size_t b) {
    Rng rng = make_rng(sample_master, b);
    std::normal_distribution<double> normal(0.0, 1.0);
    const std::size_t begin = b * kSampleBlock;
    const std::size_t end = std::min(samples, begin + kSampleBlock);
    Vector z(n);
    for (std::size_t t = begin; t < end; ++t) {
      const double s = amplitude_scale * normal(rng);
      for (Index i = 0; i < n; ++i) z(i) = normal(rng);
      out.col(static_cast<Index>(t)) = s * direction + coloring * z;
    }
  });
  return out;
}

CovariancePair analytic_covariance(const SourceScenario& sc) {
  validate(sc);
  const Vector x = effective_source(sc);
  CovariancePair cp;
  cp.noise = sc.noise_cov;
  cp.signal = sc.noise_cov + x * x.transpose();
  cp.provenance = Provenance::kAnalytic;
  cp.source = x;
  return cp;
}

SampleCovariance sample_covariance(const MatrixRef& samples) {
  const Index n = samples.rows();
  const Index t = samples.cols();
  if (t < n || t == 0) {
    throw Error(ErrorCode::kInsufficientSamples,
                "insufficient samples for full-rank covariance: T=" + std::to_string(t) +
                    " < N=" + std::to_string(n));
  }
  Matrix m = (samples * samples.transpose()) / static_cast<double>(t);
  SampleCovariance out;
  out.matrix = 0.5 * (m + m.transpose());
  out.full_rank = linalg::column_rank(out.matrix, 1e-10) == n;
  return out;
}

CovariancePair sample_covariance_pair(const SourceScenario& sc, std::size_t samples) {
  const SampleCovariance sample = sample_covariance(simulate_samples(sc, samples));
  if (!sample.full_rank) {
    throw Error(ErrorCode::kInsufficientSamples, "sample covariance is rank deficient");
  }
  CovariancePair cp;
  cp.signal = sample.matrix;
  cp.noise = sc.noise_cov;
  cp.provenance = Provenance::kSample;
  cp.sample_count = samples;
  return cp;
}

Vector recover_source_direction(const CovariancePair& cp) {
  const Metric noise(cp.noise);
  const Metric whitener = linalg::psd_power(noise, -0.5);
  const Matrix& w = whitener.matrix();
  Matrix m = w * cp.signal * w;
  m = 0.5 * (m + m.transpose());

  Eigen::SelfAdjointEigenSolver<Matrix> solver(m);
  const Index n = m.rows();
  const double top = solver.eigenvalues()(n - 1);
  const double second = n > 1 ? solver.eigenvalues()(n - 2) : 0.0;
  if (!(top > 1.0 + 1e-8) || top - second <= 1e-10 * std::abs(top)) {
    throw Error(ErrorCode::kSourceNotIdentifiable, "source direction not identifiable");
  }
  Vector v = linalg::psd_power(noise, 0.5).matrix() * solver.eigenvectors().col(n - 1);
  v /= v.norm();
  for (Index i = 0; i < v.size(); ++i) {
    if (v(i) != 0.0) {
      if (v(i) < 0.0) v = -v;
      break;
    }
  }
  return v;
}

Matrix make_noise(Rng& rng, Index sensors, const NoiseSpec& spec) {
  const double var = spec.sigma * spec.sigma;
  switch (spec.kind) {
    case NoiseKind::kWhite:
      return var * Matrix::Identity(sensors, sensors);
    case NoiseKind::kRandomSpd:
      return var * random_spd(rng, sensors);
    case NoiseKind::kExplicit:
      if (spec.explicit_matrix.rows() != sensors || spec.explicit_matrix.cols() != sensors) {
        throw Error(ErrorCode::kDimensionMismatch, "explicit noise covariance must be N x N");
      }
      return spec.explicit_matrix;
  }
  throw Error(ErrorCode::kInternal, "unknown noise kind");
}

SourceScenario random_scenario(std::uint64_t seed, Index sensors, const NoiseSpec& noise, double q2) {
  Rng rng = make_rng(seed, 0);
  SourceScenario sc;
  sc.leadfield = random_leadfield(rng, sensors, 3);
  sc.eta = random_unit_vector(rng, 3);
  sc.q2 = q2;
  sc.noise_cov = make_noise(rng, sensors, noise);
  sc.seed = seed;
  validate(sc);
  return sc;
}

CandidateGrid random_grid_with(Rng& rng, Index sensors, Index k, std::size_t count,
                               const MatrixRef& true_leadfield, std::size_t true_position) {
  CandidateGrid grid;
  grid.sensor_count = sensors;
  true_position = std::min(true_position, count);
  for (std::size_t i = 0; i < count; ++i) {
    if (i == true_position) grid.candidates.push_back({"true", true_leadfield});
    grid.candidates.push_back({"c" + std::to_string(i), random_leadfield(rng, sensors, k)});
  }
  if (true_position == count) grid.candidates.push_back({"true", true_leadfield});
  return grid;
}

Matrix random_complete_leadfield(Rng& rng, Index sensors, Index locations) {
  const Matrix h = linalg::centering_operator(sensors);
  Matrix l(sensors, 3 * locations);
  for (Index m = 0; m < locations; ++m) {
    Matrix block;
    do {
      block = h * gaussian_matrix(rng, sensors, 3);
    } while (!linalg::full_column_rank(block));
    l.middleCols(3 * m, 3) = block;
  }
  return l;
}

CandidateGrid grid_from_complete_leadfield(const MatrixRef& complete, Index k) {
  if (k <= 0 || complete.cols() % k != 0) {
    throw Error(ErrorCode::kDimensionMismatch, "complete leadfield column count is not a multiple of k");
  }
  CandidateGrid grid;
  grid.sensor_count = complete.rows();
  for (Index m = 0; m < complete.cols() / k; ++m) {
    grid.candidates.push_back({"loc" + std::to_string(m), complete.middleCols(m * k, k)});
  }
  return grid;
}

}  // namespace dipscan::sim
