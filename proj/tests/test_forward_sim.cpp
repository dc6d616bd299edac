#include <gtest/gtest.h>

#include <cmath>
#include <cstdlib>

#include "dipscan/forward_sim.hpp"
#include "support.hpp"

using namespace dipscan;
using linalg::Metric;
using oracle::code_of;
using oracle::vec;

namespace {

sim::SourceScenario scenario(Matrix l0, Vector eta, double q2, Matrix noise, std::uint64_t seed = 1) {
  sim::SourceScenario sc;
  sc.leadfield = std::move(l0);
  sc.eta = std::move(eta);
  sc.q2 = q2;
  sc.noise_cov = std::move(noise);
  sc.seed = seed;
  return sc;
}

// Sine-based, accurate for tiny angles where acos of the cosine is not.
double angle(const VectorRef& a, const VectorRef& b) {
  const Vector bu = b / b.norm();
  return std::asin(std::min(1.0, (a - bu * bu.dot(a)).norm() / a.norm()));
}

}  // namespace

TEST(Scenario, Validation) {
  auto sc = scenario(Matrix::Identity(4, 3), vec({1, 0, 0}), 1.0, Matrix::Identity(4, 4));
  EXPECT_NO_THROW(sim::validate(sc));
  auto bad = sc;
  bad.eta = vec({1, 1, 0});
  EXPECT_EQ(code_of([&] { sim::validate(bad); }), ErrorCode::kInvalidArgument);
  bad = sc;
  bad.leadfield.col(2) = bad.leadfield.col(1);
  EXPECT_EQ(code_of([&] { sim::validate(bad); }), ErrorCode::kDegenerateCandidate);
  bad = sc;
  bad.noise_cov(3, 3) = 0.0;
  EXPECT_EQ(code_of([&] { sim::validate(bad); }), ErrorCode::kSingularMetric);
  bad = sc;
  bad.q2 = -1.0;
  EXPECT_EQ(code_of([&] { sim::validate(bad); }), ErrorCode::kInvalidArgument);
}

TEST(Simulate, ZeroAmplitudeIsPureNoise) {
  const auto sc = sim::random_scenario(3, 6, {sim::NoiseKind::kRandomSpd, 1.0, {}}, 0.0);
  const std::size_t t = 20000;
  const Matrix d = sim::simulate_samples(sc, t);
  const Vector mean = d.rowwise().mean();
  const double bound = 5.0 / std::sqrt(static_cast<double>(t)) * std::sqrt(sc.noise_cov.diagonal().maxCoeff());
  EXPECT_LE(mean.cwiseAbs().maxCoeff(), bound);
}

TEST(Simulate, NearNoiselessColumnsAreDipolar) {
  auto sc = sim::random_scenario(4, 7, {sim::NoiseKind::kWhite, 1e-10, {}}, 2.0);
  const Vector dir = sc.leadfield * sc.eta;
  const double signal_scale = std::sqrt(sc.q2) * dir.norm();
  const Matrix d = sim::simulate_samples(sc, 200);
  for (Index t = 0; t < d.cols(); ++t) {
    const Vector col = d.col(t);
    const Vector residual = col - dir * (dir.dot(col) / dir.squaredNorm());
    EXPECT_LE(residual.norm(), 1e-8 * signal_scale);
  }
}

TEST(Simulate, SecondMomentMatchesAnalyticCovariance) {
  const auto sc = sim::random_scenario(42, 8, {sim::NoiseKind::kRandomSpd, 1.0, {}}, 1.5);
  const std::size_t t = 10000;
  const Matrix d = sim::simulate_samples(sc, t);
  const Matrix r = sim::analytic_covariance(sc).signal;
  const Matrix sample = d * d.transpose() / static_cast<double>(t);
  for (Index i = 0; i < 8; ++i) {
    for (Index j = 0; j < 8; ++j) {
      // Var(d_i d_j) = R_ii R_jj + R_ij^2 for zero-mean Gaussian data.
      const double se = std::sqrt((r(i, i) * r(j, j) + r(i, j) * r(i, j)) / static_cast<double>(t));
      EXPECT_LE(std::abs(sample(i, j) - r(i, j)), 5.0 * se) << i << "," << j;
    }
  }
}

TEST(Simulate, DeterministicAcrossThreadCounts) {
  const auto sc = sim::random_scenario(8, 5, {sim::NoiseKind::kRandomSpd, 1.0, {}}, 1.0);
  const char* saved = std::getenv("DIPSCAN_THREADS");
  const std::string previous = saved ? saved : "";
  setenv("DIPSCAN_THREADS", "1", 1);
  const Matrix serial = sim::simulate_samples(sc, 5000);
  setenv("DIPSCAN_THREADS", "4", 1);
  const Matrix parallel = sim::simulate_samples(sc, 5000);
  const Matrix again = sim::simulate_samples(sc, 5000);
  if (saved) setenv("DIPSCAN_THREADS", previous.c_str(), 1); else unsetenv("DIPSCAN_THREADS");
  EXPECT_EQ(serial, parallel);
  EXPECT_EQ(parallel, again);
}

TEST(AnalyticCovariance, Examples) {
  const auto sc = scenario(Matrix::Identity(3, 3), vec({1, 0, 0}), 1.0, Matrix::Identity(3, 3));
  EXPECT_EQ(sim::analytic_covariance(sc).signal, Matrix(oracle::diag({2, 1, 1})));

  auto silent = sim::random_scenario(6, 5, {sim::NoiseKind::kRandomSpd, 1.0, {}}, 0.0);
  const auto cp = sim::analytic_covariance(silent);
  EXPECT_EQ(cp.signal, cp.noise);
  EXPECT_EQ(cp.provenance, sim::Provenance::kAnalytic);
}

TEST(AnalyticCovariance, TopWhitenedEigenvectorIsTheSource) {
  const auto sc = sim::random_scenario(5, 9, {sim::NoiseKind::kRandomSpd, 1.0, {}}, 1.0);
  const auto cp = sim::analytic_covariance(sc);
  const Matrix w = linalg::psd_power(Metric(cp.noise), -0.5).matrix();
  Eigen::SelfAdjointEigenSolver<Matrix> eig(w * cp.signal * w);
  EXPECT_LE(angle(eig.eigenvectors().col(8), w * *cp.source), 1e-8);

  Eigen::JacobiSVD<Matrix> svd(cp.signal - cp.noise);
  EXPECT_LE(svd.singularValues()(1), 1e-12 * svd.singularValues()(0));
}

TEST(SampleCovariance, Examples) {
  const Vector d = vec({1, -2, 3});
  const Matrix repeated = d.replicate(1, 5);
  const auto sc = sim::sample_covariance(repeated);
  EXPECT_LE((sc.matrix - d * d.transpose()).norm(), 1e-14);
  EXPECT_FALSE(sc.full_rank);

  const auto zero = sim::sample_covariance(Matrix::Zero(3, 4));
  EXPECT_EQ(zero.matrix, Matrix::Zero(3, 3));
  EXPECT_FALSE(zero.full_rank);

  EXPECT_EQ(code_of([] { sim::sample_covariance(Matrix::Ones(4, 3)); }), ErrorCode::kInsufficientSamples);
}

TEST(SampleCovariance, ConvergesToAnalytic) {
  const auto sc = sim::random_scenario(42, 8, {sim::NoiseKind::kRandomSpd, 1.0, {}}, 1.5);
  const auto cp = sim::sample_covariance_pair(sc, 20000);
  const Matrix r = sim::analytic_covariance(sc).signal;
  EXPECT_TRUE(cp.provenance == sim::Provenance::kSample);
  EXPECT_EQ(cp.sample_count, 20000u);
  EXPECT_LE((cp.signal - r).norm() / r.norm(), 0.05);
  EXPECT_EQ(cp.signal, cp.signal.transpose());
}

TEST(RecoverDirection, Examples) {
  sim::CovariancePair cp;
  const Vector x = vec({3, 0, 0, 0});
  cp.noise = Matrix::Identity(4, 4);
  cp.signal = cp.noise + x * x.transpose();
  EXPECT_LE((sim::recover_source_direction(cp) - vec({1, 0, 0, 0})).norm(), 1e-14);

  cp.signal = cp.noise;
  EXPECT_EQ(code_of([&] { sim::recover_source_direction(cp); }), ErrorCode::kSourceNotIdentifiable);
}

TEST(RecoverDirection, ParallelToSourceOnRandomScenarios) {
  for (std::uint64_t seed = 100; seed < 120; ++seed) {
    const auto sc = sim::random_scenario(seed, 10, {sim::NoiseKind::kRandomSpd, 1.0, {}}, 0.7);
    const auto cp = sim::analytic_covariance(sc);
    const Vector v = sim::recover_source_direction(cp);
    EXPECT_NEAR(v.norm(), 1.0, 1e-14);
    EXPECT_LE(angle(v, *cp.source), 1e-8) << "seed " << seed;
    for (Index i = 0; i < v.size(); ++i) {
      if (v(i) != 0.0) {
        EXPECT_GT(v(i), 0.0);
        break;
      }
    }
  }
}

TEST(Grid, ValidationAndLookup) {
  Rng rng = make_rng(9, 0);
  const Matrix l0 = random_leadfield(rng, 6, 3);
  auto grid = sim::random_grid_with(rng, 6, 3, 10, l0, 4);
  EXPECT_EQ(grid.size(), 11u);
  EXPECT_EQ(grid.candidates[4].id, "true");
  EXPECT_EQ(sim::find_candidate(grid, l0), std::optional<std::size_t>(4));
  EXPECT_NO_THROW(sim::validate(grid));
  grid.candidates[1].id = grid.candidates[0].id;
  EXPECT_EQ(code_of([&] { sim::validate(grid); }), ErrorCode::kInvalidArgument);
}

TEST(Grid, CompleteLeadfieldIsCentered) {
  Rng rng = make_rng(10, 0);
  const Matrix l = sim::random_complete_leadfield(rng, 7, 4);
  EXPECT_EQ(l.cols(), 12);
  EXPECT_LE((Vector::Ones(7).transpose() * l).norm(), 1e-12);
  const auto grid = sim::grid_from_complete_leadfield(l, 3);
  EXPECT_EQ(grid.size(), 4u);
  EXPECT_EQ(grid.candidates[2].id, "loc2");
  EXPECT_EQ(code_of([&] { sim::grid_from_complete_leadfield(l, 5); }), ErrorCode::kDimensionMismatch);
}
