#pragma once

#include <cstdint>
#include <random>

#include "dipscan/linalg.hpp"

namespace dipscan {

using Rng = std::mt19937_64;

/// Seed for the stream of unit `index` under `master`. Distinct (master, index)
/// pairs give independent streams; the mapping is stable across runs.
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index);

inline Rng make_rng(std::uint64_t master, std::uint64_t index) {
  return Rng(derive_seed(master, index));
}

Matrix gaussian_matrix(Rng& rng, Index rows, Index cols);
Vector gaussian_vector(Rng& rng, Index n);
Vector random_unit_vector(Rng& rng, Index n);

/// Haar-distributed orthogonal matrix (QR of a Gaussian matrix, sign-fixed).
Matrix random_orthogonal(Rng& rng, Index n);

/// SPD matrix Q diag(lambda) Q^T with Q Haar-orthogonal and log-uniform
/// eigenvalues in [lo, hi].
Matrix random_spd(Rng& rng, Index n, double lo = 0.5, double hi = 2.0);

/// Gaussian N x k matrix, redrawn until it has full column rank.
Matrix random_leadfield(Rng& rng, Index sensors, Index k);

}  // namespace dipscan
