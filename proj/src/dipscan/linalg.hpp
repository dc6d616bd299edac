#pragma once

#include <iosfwd>
#include <string>

#include <Eigen/Dense>

namespace dipscan {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;
using MatrixRef = Eigen::Ref<const Matrix>;
using VectorRef = Eigen::Ref<const Vector>;

}  // namespace dipscan

namespace dipscan::linalg {

/// Relative eigenvalue cutoff below which a direction counts as kernel.
inline constexpr double kDefaultRankTol = 1e-10;

/// Largest relative kernel component a vector may carry and still count as
/// lying in the range of a metric.
inline constexpr double kRangeTol = 1e-8;

enum class KernelPolicy {
  kStrict,         // negative powers require full rank
  kPseudoInverse,  // negative powers act on the retained spectrum only
};

/// Symmetric positive (semi)definite operator C defining <x, y>_C = x^T C y.
///
/// The spectrum is computed once at construction. Eigenvalues are stored in
/// descending order; eigenvalues below rank_tol * lambda_max are replaced by
/// exact zeros and their eigenvectors span the declared kernel. Immutable.
class Metric {
 public:
  explicit Metric(const MatrixRef& matrix, double rank_tol = kDefaultRankTol);

  static Metric identity(Index dim);

  Index dim() const { return matrix_.rows(); }
  Index rank() const { return rank_; }
  bool has_kernel() const { return rank_ < dim(); }
  double rank_tol() const { return rank_tol_; }

  const Matrix& matrix() const { return matrix_; }
  const Vector& eigenvalues() const { return eigenvalues_; }
  const Matrix& eigenvectors() const { return eigenvectors_; }
  /// Symmetric square root C^{1/2}; shares the kernel of C.
  const Matrix& sqrt_matrix() const { return sqrt_; }

  /// Norm of the component of x in the declared kernel, relative to |x|.
  double kernel_fraction(const VectorRef& x) const;
  bool in_range(const VectorRef& x) const;
  /// Throws kOutsideMetricRange when x leaves the range beyond kRangeTol.
  void require_in_range(const VectorRef& x) const;

  /// Orthogonal projection onto range(C).
  Matrix range_projector() const;

 private:
  struct Spectral {};
  Metric(Spectral, Matrix eigenvectors, Vector eigenvalues, double rank_tol);

  void finish_construction();

  friend Metric psd_power(const Metric& c, double exponent, KernelPolicy policy);

  Matrix matrix_;
  Matrix eigenvectors_;
  Vector eigenvalues_;
  Matrix sqrt_;
  Index rank_ = 0;
  double rank_tol_ = kDefaultRankTol;
};

/// x^T C y, evaluated on the retained spectrum.
double metric_inner(const Metric& c, const VectorRef& x, const VectorRef& y);

/// <x, x>_C.
double metric_norm_sq(const Metric& c, const VectorRef& x);

/// Spectral power C^p on the retained eigenvalues. With kPseudoInverse the
/// kernel is preserved for negative powers; with kStrict a kernel makes
/// negative powers fail with kSingularMetric.
Metric psd_power(const Metric& c, double exponent,
                 KernelPolicy policy = KernelPolicy::kStrict);

struct RankOneUpdate {
  Matrix base_inverse;  // B^{-1}
  Vector vector;        // u
  double scale = 1.0;   // s
};

/// (B + s u u^T)^{-1} from B^{-1}. Fails with kUpdateSingular when
/// |1 + s u^T B^{-1} u| <= 1e-12.
Matrix sherman_morrison_inverse(const RankOneUpdate& update);

/// Orthogonal projector I - 11^T / n onto the complement of the constant vector.
Matrix centering_operator(Index n);

/// Numerical column rank via singular values relative to the largest one.
Index column_rank(const MatrixRef& a, double rel_tol = 1e-10);
bool full_column_rank(const MatrixRef& a, double rel_tol = 1e-10);

/// True when |C_ij - C_ji| <= rel_tol * max|C_ij| for all entries.
bool is_symmetric(const MatrixRef& c, double rel_tol);

// Plain-text matrix format: "rows cols" on the first line, then one row per
// line of whitespace separated numbers.
Matrix read_matrix(std::istream& in);
void write_matrix(std::ostream& out, const MatrixRef& m);
Matrix load_matrix(const std::string& path);
void save_matrix(const std::string& path, const MatrixRef& m);

/// Shortest round-trip decimal representation.
std::string format_double(double value);

}  // namespace dipscan::linalg
