// Independent reference computations for the unit and acceptance tests.
#pragma once

#include <cmath>

#include "dipscan/error.hpp"
#include "dipscan/linalg.hpp"
#include "dipscan/random.hpp"

namespace dipscan::oracle {

/// Error code thrown by fn, or kInternal when it returns normally.
template <typename F>
ErrorCode code_of(F&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  return ErrorCode::kInternal;
}

inline Vector vec(std::initializer_list<double> v) {
  Vector out(static_cast<Index>(v.size()));
  Index i = 0;
  for (double x : v) out(i++) = x;
  return out;
}

inline Matrix diag(std::initializer_list<double> v) { return vec(v).asDiagonal(); }

inline Matrix dense_inverse(const MatrixRef& m) { return m.fullPivLu().inverse(); }

inline double relative_frobenius(const MatrixRef& a, const MatrixRef& b) {
  const double scale = std::max(a.norm(), b.norm());
  return scale > 0.0 ? (a - b).norm() / scale : 0.0;
}

inline Matrix spd_from_seed(std::uint64_t seed, Index n) {
  Rng rng = make_rng(seed, 17);
  return random_spd(rng, n);
}

/// d^T C A (A^T C A)^{-1} A^T C d / d^T C d, with an explicit inverse.
inline double gof_quadratic_form(const MatrixRef& c, const MatrixRef& a, const VectorRef& d) {
  const Vector y = a.transpose() * c * d;
  return y.dot(dense_inverse(a.transpose() * c * a) * y) / d.dot(c * d);
}

/// Coarse-to-fine grid search for argmin_j |d - A j|_C^2 (k = 3). The first
/// box has half-width |d|_C / sigma_min(C^{1/2} A), which bounds any minimizer.
inline Vector grid_minimize_moment(const MatrixRef& c, const MatrixRef& a, const VectorRef& d, int levels = 14,
                                   int points = 21) {
  auto objective = [&](const Vector& j) {
    const Vector r = d - a * j;
    return r.dot(c * r);
  };
  const Eigen::SelfAdjointEigenSolver<Matrix> gram(a.transpose() * c * a, Eigen::EigenvaluesOnly);
  double radius = std::sqrt(d.dot(c * d) / gram.eigenvalues().minCoeff());
  Vector center = Vector::Zero(3);
  for (int level = 0; level < levels; ++level) {
    const double step = 2.0 * radius / (points - 1);
    Vector best = center;
    double best_value = objective(center);
    Vector j(3);
    for (int x = 0; x < points; ++x) {
      for (int y = 0; y < points; ++y) {
        for (int z = 0; z < points; ++z) {
          j << center(0) - radius + x * step, center(1) - radius + y * step, center(2) - radius + z * step;
          const double v = objective(j);
          if (v < best_value) {
            best_value = v;
            best = j;
          }
        }
      }
    }
    center = best;
    radius = 3.0 * step;
  }
  return center;
}

/// tilde-NAI for R = N + x x^T through the rank-one inverse of L^T R^{-1} L.
inline double nai_tilde_closed_form(const MatrixRef& n_inv, const VectorRef& x, const MatrixRef& l) {
  const double q = x.dot(n_inv * x);
  const double mu = q / (1.0 + q);
  const Matrix g = l.transpose() * n_inv * l;
  const Matrix g_inv = dense_inverse(g);
  const Vector b = l.transpose() * n_inv * x;
  const double gof = b.dot(g_inv * b) / q;
  const Vector gb = g_inv * b;
  return 1.0 + (mu / q) * (1.0 / (1.0 - mu * gof)) * gb.squaredNorm() / g_inv.trace();
}

/// Vector NAI power using R^{-1} = N^{-1} - (mu/q)(N^{-1}x)(N^{-1}x)^T instead of inverting R.
inline double p_nai_rank_one(const MatrixRef& n_inv, const VectorRef& x, const MatrixRef& l) {
  const double q = x.dot(n_inv * x);
  const double mu = q / (1.0 + q);
  const Vector nx = n_inv * x;
  const Matrix r_inv = n_inv - (mu / q) * nx * nx.transpose();
  const Matrix gr = l.transpose() * r_inv * l;
  const Matrix gn = l.transpose() * n_inv * l;
  return (gn * dense_inverse(gr)).trace();
}

}  // namespace dipscan::oracle
