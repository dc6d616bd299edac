#include "dipscan/random.hpp"

#include <cmath>

#include "dipscan/error.hpp"

namespace dipscan {

std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index) {
  std::seed_seq seq{static_cast<std::uint32_t>(master), static_cast<std::uint32_t>(master >> 32),
                    static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32),
                    0x9e3779b9u};
  std::uint32_t words[2];
  seq.generate(words, words + 2);
  return (static_cast<std::uint64_t>(words[0]) << 32) | words[1];
}

Matrix gaussian_matrix(Rng& rng, Index rows, Index cols) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix m(rows, cols);
  // Row-by-row fill so the draw order matches the row-major text format.
  for (Index r = 0; r < rows; ++r) {
    for (Index c = 0; c < cols; ++c) m(r, c) = normal(rng);
  }
  return m;
}

Vector gaussian_vector(Rng& rng, Index n) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Vector v(n);
  for (Index i = 0; i < n; ++i) v(i) = normal(rng);
  return v;
}

Vector random_unit_vector(Rng& rng, Index n) {
  Vector v;
  do {
    v = gaussian_vector(rng, n);
  } while (v.norm() < 1e-8);
  return v / v.norm();
}

Matrix random_orthogonal(Rng& rng, Index n) {
  const Matrix g = gaussian_matrix(rng, n, n);
  Eigen::HouseholderQR<Matrix> qr(g);
  Matrix q = qr.householderQ() * Matrix::Identity(n, n);
  const Matrix r = qr.matrixQR().triangularView<Eigen::Upper>();
  for (Index i = 0; i < n; ++i) {
    if (r(i, i) < 0.0) q.col(i) = -q.col(i);
  }
  return q;
}

Matrix random_spd(Rng& rng, Index n, double lo, double hi) {
  if (!(lo > 0.0) || !(hi >= lo)) {
    throw Error(ErrorCode::kInvalidArgument, "random_spd: need 0 < lo <= hi");
  }
  const Matrix q = random_orthogonal(rng, n);
  std::uniform_real_distribution<double> uniform(std::log(lo), std::log(hi));
  Vector lambda(n);
  for (Index i = 0; i < n; ++i) lambda(i) = std::exp(uniform(rng));
  const Matrix m = q * lambda.asDiagonal() * q.transpose();
  return 0.5 * (m + m.transpose());
}

Matrix random_leadfield(Rng& rng, Index sensors, Index k) {
  if (k > sensors) {
    throw Error(ErrorCode::kInvalidArgument, "leadfield with more columns than sensors cannot have full rank");
  }
  for (int attempt = 0; attempt < 100; ++attempt) {
    Matrix a = gaussian_matrix(rng, sensors, k);
    if (linalg::full_column_rank(a)) return a;
  }
  throw Error(ErrorCode::kInternal, "failed to draw a full-rank leadfield");
}

}  // namespace dipscan
