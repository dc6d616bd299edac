#include <gtest/gtest.h>

#include <cmath>

#include "dipscan/forward_sim.hpp"
#include "dipscan/inverse_scan.hpp"
#include "support.hpp"

using namespace dipscan;
using linalg::Metric;
using oracle::code_of;
using oracle::vec;

namespace {

struct Instance {
  Matrix complete;  // centered N x 3M
  Matrix a;         // centered N x 3
  Vector d;         // centered data
  Matrix noise;
};

Instance random_instance(std::uint64_t seed, Index n, Index locations) {
  Rng rng = make_rng(seed, 0);
  Instance out;
  out.complete = sim::random_complete_leadfield(rng, n, locations);
  const Matrix h = linalg::centering_operator(n);
  out.a = h * random_leadfield(rng, n, 3);
  out.d = h * gaussian_vector(rng, n);
  out.noise = random_spd(rng, n);
  return out;
}

Metric recipe_metric(scan::MetricKind kind, double alpha, const Instance& inst) {
  scan::MetricRecipe recipe{kind, alpha, {}};
  scan::MetricInputs inputs;
  inputs.complete_leadfield = inst.complete;
  inputs.noise = inst.noise;
  return scan::build_metric(recipe, inputs).metric;
}

}  // namespace

TEST(WeightedFit, IdentityExamples) {
  const Metric c = Metric::identity(3);
  const Matrix a = Matrix::Identity(3, 3);
  const Vector d = vec({1, 2, 2});
  const auto fit = scan::weighted_ls_fit(c, a, d);
  EXPECT_LE((fit.moment - d).norm(), 1e-15);
  EXPECT_DOUBLE_EQ(fit.gof, 1.0);
  EXPECT_LE((scan::sloreta_reconstruction(c, a, d) - d).norm(), 1e-15);
  EXPECT_NEAR(scan::sloreta_power(c, a, d), 9.0, 1e-14);
  EXPECT_NEAR(scan::residual_variance(c, a, d), 0.0, 1e-28);
}

TEST(WeightedFit, OrthogonalDataGivesZero) {
  const Metric c(oracle::diag({2, 1, 3, 1}));
  Matrix a = Matrix::Zero(4, 2);
  a(0, 0) = 1;
  a(1, 1) = 1;
  const Vector d = vec({0, 0, 1, -2});  // C-orthogonal to range(A): C is diagonal
  const auto fit = scan::weighted_ls_fit(c, a, d);
  EXPECT_LE(fit.moment.norm(), 1e-15);
  EXPECT_EQ(fit.gof, 0.0);
  EXPECT_LE(scan::sloreta_reconstruction(c, a, d).norm(), 1e-15);
  EXPECT_DOUBLE_EQ(scan::residual_variance(c, a, d), linalg::metric_norm_sq(c, d));
}

TEST(WeightedFit, Errors) {
  const Metric c = Metric::identity(4);
  Matrix a = Matrix::Identity(4, 3);
  EXPECT_EQ(code_of([&] { scan::gof(c, a, Vector::Zero(4)); }), ErrorCode::kZeroData);
  a.col(2) = a.col(1);
  EXPECT_EQ(code_of([&] { scan::weighted_ls_fit(c, a, vec({1, 2, 3, 4})); }), ErrorCode::kDegenerateCandidate);
  EXPECT_EQ(code_of([&] { scan::weighted_ls_fit(c, Matrix::Identity(3, 3), vec({1, 2, 3, 4})); }),
            ErrorCode::kDimensionMismatch);
  const Metric centered(linalg::centering_operator(4));
  EXPECT_EQ(code_of([&] { scan::weighted_ls_fit(centered, Matrix::Identity(4, 3), vec({1, -1, 0, 0})); }),
            ErrorCode::kOutsideMetricRange);
}

TEST(WeightedFit, MatchesBruteForceGrid) {
  Rng rng = make_rng(13, 0);
  const Matrix c = random_spd(rng, 8);
  const Matrix a = random_leadfield(rng, 8, 3);
  const Vector d = gaussian_vector(rng, 8);
  const auto fit = scan::weighted_ls_fit(Metric(c), a, d);
  const Vector grid = oracle::grid_minimize_moment(c, a, d);
  EXPECT_LE((grid - fit.moment).norm(), 1e-6 * (1.0 + fit.moment.norm()));
  const Vector r = d - a * grid;
  EXPECT_GE(r.dot(c * r), fit.residual_norm_sq - 1e-12 * fit.data_norm_sq);
}

TEST(WeightedFit, TwoGofFormulasAgree) {
  for (std::uint64_t seed = 13; seed < 33; ++seed) {
    Rng rng = make_rng(seed, 0);
    const Matrix c = random_spd(rng, 8);
    const Matrix a = random_leadfield(rng, 8, 3);
    const Vector d = gaussian_vector(rng, 8);
    const auto fit = scan::weighted_ls_fit(Metric(c), a, d);
    EXPECT_NEAR(fit.gof, oracle::gof_quadratic_form(c, a, d), 1e-10);
    EXPECT_GE(fit.gof, -1e-10);
    EXPECT_LE(fit.gof, 1.0 + 1e-10);
    const Vector r = d - a * fit.moment;
    EXPECT_NEAR(fit.residual_norm_sq, r.dot(c * r), 1e-10 * fit.residual_norm_sq + 1e-14);
  }
}

TEST(WeightedFit, InvarianceProperties) {
  for (std::uint64_t seed = 40; seed < 60; ++seed) {
    Rng rng = make_rng(seed, 0);
    const Metric c(random_spd(rng, 9));
    const Matrix a = random_leadfield(rng, 9, 3);
    const Vector d = gaussian_vector(rng, 9);
    const auto fit = scan::weighted_ls_fit(c, a, d);

    EXPECT_NEAR(scan::gof(c, a, -3.7 * d), fit.gof, 1e-12);
    const Matrix g = random_leadfield(rng, 3, 3);
    EXPECT_NEAR(scan::gof(c, a * g, d), fit.gof, 1e-10);

    const Vector r = d - a * fit.moment;
    const double dn = std::sqrt(fit.data_norm_sq);
    for (Index i = 0; i < 3; ++i) {
      const Vector col = a.col(i);
      EXPECT_LE(std::abs(linalg::metric_inner(c, r, col)), 1e-10 * dn * std::sqrt(linalg::metric_norm_sq(c, col)));
    }
    EXPECT_NEAR(scan::residual_variance(c, a, d), fit.data_norm_sq * (1.0 - fit.gof), 1e-10 * fit.data_norm_sq);
  }
}

TEST(SloretaPower, EqualsWeightedGofAcrossRecipes) {
  using K = scan::MetricKind;
  const std::vector<std::pair<K, double>> recipes = {
      {K::kIdentity, 0.0},        {K::kInverseNoise, 0.0}, {K::kClassicSloreta, 0.0}, {K::kClassicSloreta, 0.1},
      {K::kSekiharaSloreta, 0.1}, {K::kEloreta, 0.0},      {K::kEloreta, 0.1},
  };
  double worst = 0.0;
  for (std::uint64_t seed = 0; seed < 28; ++seed) {
    const auto& [kind, alpha] = recipes[seed % recipes.size()];
    const Instance inst = random_instance(1000 + seed, 6 + static_cast<Index>(seed % 5), 4);
    const Metric c = recipe_metric(kind, alpha, inst);
    const auto fit = scan::weighted_ls_fit(c, inst.a, inst.d);
    const double power = scan::sloreta_power(c, inst.a, inst.d);
    worst = std::max(worst, std::abs(power - fit.data_norm_sq * fit.gof) / fit.data_norm_sq);
  }
  EXPECT_LE(worst, 1e-10);
}

TEST(BuildMetric, Examples) {
  scan::MetricInputs inputs;
  inputs.complete_leadfield = Matrix::Zero(4, 6);
  EXPECT_EQ(scan::build_metric({scan::MetricKind::kIdentity, 0.0, {}}, inputs).metric.matrix(),
            Matrix(Matrix::Identity(4, 4)));
  const Metric sek = scan::build_metric({scan::MetricKind::kSekiharaSloreta, 2.0, {}}, inputs).metric;
  EXPECT_LE((sek.matrix() - 0.5 * Matrix::Identity(4, 4)).norm(), 1e-15);

  EXPECT_EQ(code_of([&] { scan::build_metric({scan::MetricKind::kInverseNoise, 0.0, {}}, inputs); }),
            ErrorCode::kInvalidArgument);
  EXPECT_EQ(code_of([&] { scan::build_metric({scan::MetricKind::kSekiharaSloreta, -1.0, {}}, inputs); }),
            ErrorCode::kInvalidArgument);
  EXPECT_EQ(scan::parse_metric_kind("eloreta"), scan::MetricKind::kEloreta);
  EXPECT_FALSE(scan::parse_metric_kind("loreta").has_value());
}

TEST(BuildMetric, ClassicIsPseudoInverse) {
  Rng rng = make_rng(9, 0);
  const Matrix l = sim::random_complete_leadfield(rng, 8, 4);
  scan::MetricInputs inputs;
  inputs.complete_leadfield = l;
  for (double alpha : {0.0, 0.3}) {
    const Metric c = scan::build_metric({scan::MetricKind::kClassicSloreta, alpha, {}}, inputs).metric;
    const Matrix k = l * l.transpose() + alpha * linalg::centering_operator(8);
    EXPECT_LE((c.matrix() * k * c.matrix() - c.matrix()).norm(), 1e-9 * c.matrix().norm());
    EXPECT_LE((k * c.matrix() * k - k).norm(), 1e-9 * k.norm());
    EXPECT_EQ(c.rank(), 7);
  }
}

TEST(Eloreta, TrivialCaseIsExactIdentity) {
  const auto w = scan::solve_eloreta_weights(Matrix::Identity(3, 3), 0.0);
  ASSERT_TRUE(w.converged);
  ASSERT_EQ(w.blocks.size(), 1u);
  EXPECT_EQ(w.blocks[0], Eigen::Matrix3d::Identity());
}

TEST(Eloreta, ConvergedWeightsSatisfyFixedPoint) {
  for (std::uint64_t seed = 0; seed < 6; ++seed) {
    Rng rng = make_rng(300 + seed, 0);
    const Index n = 8 + static_cast<Index>(seed);
    const Matrix l = sim::random_complete_leadfield(rng, n, 3 + static_cast<Index>(seed));
    for (double alpha : {0.0, 0.1}) {
      const auto w = scan::solve_eloreta_weights(l, alpha);
      ASSERT_TRUE(w.converged) << "seed " << seed << " alpha " << alpha << " residual " << w.residual;
      EXPECT_LE(scan::eloreta_residual(l, alpha, w.blocks), 1e-9);
      for (const auto& b : w.blocks) {
        EXPECT_LE((b - b.transpose()).norm(), 1e-12 * b.norm());
        EXPECT_GT(Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d>(b).eigenvalues().minCoeff(), 0.0);
      }
    }
  }
}

TEST(Eloreta, ScalingTheLeadfield) {
  Rng rng = make_rng(310, 0);
  const Matrix l = sim::random_complete_leadfield(rng, 9, 4);
  const auto base = scan::solve_eloreta_weights(l, 0.0);
  const auto scaled = scan::solve_eloreta_weights(3.0 * l, 0.0);
  ASSERT_TRUE(base.converged && scaled.converged);
  EXPECT_LE(scan::eloreta_residual(3.0 * l, 0.0, scaled.blocks), 1e-9);
  // Without regularization the defining equation is invariant under L -> cL.
  for (std::size_t i = 0; i < base.blocks.size(); ++i) {
    EXPECT_LE((scaled.blocks[i] - base.blocks[i]).norm(), 1e-8 * base.blocks[i].norm());
  }
  const auto reg = scan::solve_eloreta_weights(3.0 * l, 0.1);
  ASSERT_TRUE(reg.converged);
  EXPECT_LE(scan::eloreta_residual(3.0 * l, 0.1, reg.blocks), 1e-9);
}

TEST(Eloreta, ReportsNonConvergence) {
  Rng rng = make_rng(311, 0);
  const Matrix l = sim::random_complete_leadfield(rng, 9, 4);
  const auto w = scan::solve_eloreta_weights(l, 0.0, {1e-9, 1});
  EXPECT_FALSE(w.converged);
  EXPECT_GT(w.residual, 1e-9);
  scan::MetricInputs inputs;
  inputs.complete_leadfield = l;
  inputs.eloreta = {1e-9, 1};
  EXPECT_EQ(code_of([&] { scan::build_metric({scan::MetricKind::kEloreta, 0.0, {}}, inputs); }),
            ErrorCode::kElOretaNotConverged);
}

TEST(Scan, NoiselessSourceIsRecovered) {
  Rng rng = make_rng(17, 0);
  const Matrix l0 = random_leadfield(rng, 10, 3);
  const Vector eta = random_unit_vector(rng, 3);
  const auto grid = sim::random_grid_with(rng, 10, 3, 30, l0, 12);
  const auto report = scan::scan(Metric::identity(10), grid, l0 * eta);
  ASSERT_TRUE(report.argmax.has_value());
  EXPECT_EQ(*report.argmax, 12u);
  EXPECT_NEAR(report.entries[12].gof, 1.0, 1e-12);
  EXPECT_FALSE(report.is_tie);

  // Scaling the data does not move the argmax.
  EXPECT_EQ(scan::scan(Metric::identity(10), grid, -5.0 * l0 * eta).argmax, report.argmax);
}

TEST(Scan, SingleCandidateTiesAndFlags) {
  Rng rng = make_rng(18, 0);
  const Matrix a = random_leadfield(rng, 6, 3);
  const Vector d = gaussian_vector(rng, 6);
  sim::CandidateGrid one;
  one.sensor_count = 6;
  one.candidates = {{"only", a}};
  EXPECT_EQ(scan::scan(Metric::identity(6), one, d).argmax, std::optional<std::size_t>(0));

  Matrix degenerate = a;
  degenerate.col(2) = degenerate.col(0);
  sim::CandidateGrid grid;
  grid.sensor_count = 6;
  grid.candidates = {{"bad", degenerate}, {"a", a}, {"a_again", a}, {"other", random_leadfield(rng, 6, 3)}};
  const auto report = scan::scan(Metric::identity(6), grid, d);
  EXPECT_EQ(report.entries[0].flags, scan::kFlagDegenerate);
  EXPECT_EQ(scan::flags_to_string(report.entries[0].flags), "degenerate");
  ASSERT_TRUE(report.argmax.has_value());
  if (report.entries[1].gof >= report.entries[3].gof) {
    EXPECT_EQ(*report.argmax, 1u);
    EXPECT_TRUE(report.is_tie);
  }

  const auto zero = scan::scan(Metric::identity(6), grid, Vector::Zero(6));
  EXPECT_FALSE(zero.argmax.has_value());
  EXPECT_EQ(zero.entries[1].flags, scan::kFlagZeroData);

  const Metric centered(linalg::centering_operator(6));
  const auto outside = scan::scan(centered, grid, linalg::centering_operator(6) * d);
  EXPECT_EQ(outside.entries[1].flags, scan::kFlagOutsideRange);
}
