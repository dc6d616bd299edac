#include "dipscan/linalg.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <vector>

#include "dipscan/error.hpp"

namespace dipscan::linalg {

namespace {

std::string shape(const MatrixRef& m) {
  return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

void require_dim(const Metric& c, const VectorRef& x) {
  if (x.size() != c.dim()) {
    throw Error(ErrorCode::kDimensionMismatch,
                "vector of length " + std::to_string(x.size()) +
                    " does not match metric of dimension " + std::to_string(c.dim()));
  }
}

}  // namespace

Metric::Metric(const MatrixRef& matrix, double rank_tol) : matrix_(matrix), rank_tol_(rank_tol) {
  if (matrix_.rows() != matrix_.cols() || matrix_.rows() == 0) {
    throw Error(ErrorCode::kDimensionMismatch, "metric must be a nonempty square matrix, got " + shape(matrix_));
  }
  if (!matrix_.allFinite()) {
    throw Error(ErrorCode::kInvalidArgument, "metric contains non-finite entries");
  }
  if (!is_symmetric(matrix_, 1e-12)) {
    throw Error(ErrorCode::kNotSymmetric, "metric matrix is not symmetric");
  }

  Eigen::SelfAdjointEigenSolver<Matrix> solver(matrix_);
  if (solver.info() != Eigen::Success) {
    throw Error(ErrorCode::kInternal, "symmetric eigensolver failed");
  }
  // Eigen returns ascending order.
  eigenvalues_ = solver.eigenvalues().reverse();
  eigenvectors_ = solver.eigenvectors().rowwise().reverse();

  const double lambda_max = std::max(eigenvalues_(0), 0.0);
  const double cutoff = rank_tol_ * lambda_max;
  for (Index i = 0; i < eigenvalues_.size(); ++i) {
    if (eigenvalues_(i) < -cutoff) {
      throw Error(ErrorCode::kNotPositiveSemidefinite,
                  "metric has negative eigenvalue " + format_double(eigenvalues_(i)));
    }
    if (eigenvalues_(i) <= cutoff) eigenvalues_(i) = 0.0;
  }
  finish_construction();

  const Matrix rebuilt = eigenvectors_ * eigenvalues_.asDiagonal() * eigenvectors_.transpose();
  const double scale = matrix_.norm();
  if (scale > 0.0 && (rebuilt - matrix_).norm() > 1e-10 * scale) {
    throw Error(ErrorCode::kInternal, "metric eigendecomposition does not reproduce the matrix");
  }
}

Metric::Metric(Spectral, Matrix eigenvectors, Vector eigenvalues, double rank_tol)
    : eigenvectors_(std::move(eigenvectors)), eigenvalues_(std::move(eigenvalues)), rank_tol_(rank_tol) {
  // Restore descending order; kernel entries are exact zeros and sort last.
  std::vector<Index> order(static_cast<std::size_t>(eigenvalues_.size()));
  for (Index i = 0; i < eigenvalues_.size(); ++i) order[static_cast<std::size_t>(i)] = i;
  std::stable_sort(order.begin(), order.end(),
                   [&](Index a, Index b) { return eigenvalues_(a) > eigenvalues_(b); });
  Matrix vectors(eigenvectors_.rows(), eigenvectors_.cols());
  Vector values(eigenvalues_.size());
  for (std::size_t i = 0; i < order.size(); ++i) {
    values(static_cast<Index>(i)) = eigenvalues_(order[i]);
    vectors.col(static_cast<Index>(i)) = eigenvectors_.col(order[i]);
  }
  eigenvectors_ = std::move(vectors);
  eigenvalues_ = std::move(values);

  Matrix m = eigenvectors_ * eigenvalues_.asDiagonal() * eigenvectors_.transpose();
  matrix_ = 0.5 * (m + m.transpose());
  finish_construction();
}

void Metric::finish_construction() {
  rank_ = 0;
  for (Index i = 0; i < eigenvalues_.size(); ++i) {
    if (eigenvalues_(i) > 0.0) ++rank_;
  }
  const Vector roots = eigenvalues_.cwiseSqrt();
  Matrix s = eigenvectors_ * roots.asDiagonal() * eigenvectors_.transpose();
  sqrt_ = 0.5 * (s + s.transpose());
}

Metric Metric::identity(Index dim) {
  return Metric(Matrix::Identity(dim, dim));
}

double Metric::kernel_fraction(const VectorRef& x) const {
  require_dim(*this, x);
  if (!has_kernel()) return 0.0;
  const double norm = x.norm();
  if (norm == 0.0) return 0.0;
  const auto kernel = eigenvectors_.rightCols(dim() - rank_);
  return (kernel.transpose() * x).norm() / norm;
}

bool Metric::in_range(const VectorRef& x) const {
  return kernel_fraction(x) <= kRangeTol;
}

void Metric::require_in_range(const VectorRef& x) const {
  const double fraction = kernel_fraction(x);
  if (fraction > kRangeTol) {
    throw Error(ErrorCode::kOutsideMetricRange,
                "vector has relative kernel component " + format_double(fraction) +
                    " (outside metric range)");
  }
}

Matrix Metric::range_projector() const {
  const auto range = eigenvectors_.leftCols(rank_);
  return range * range.transpose();
}

double metric_inner(const Metric& c, const VectorRef& x, const VectorRef& y) {
  require_dim(c, x);
  require_dim(c, y);
  c.require_in_range(x);
  c.require_in_range(y);
  const auto range = c.eigenvectors().leftCols(c.rank());
  const Vector px = range.transpose() * x;
  const Vector py = range.transpose() * y;
  double sum = 0.0;
  for (Index i = 0; i < c.rank(); ++i) sum += c.eigenvalues()(i) * px(i) * py(i);
  return sum;
}

double metric_norm_sq(const Metric& c, const VectorRef& x) {
  require_dim(c, x);
  c.require_in_range(x);
  const auto range = c.eigenvectors().leftCols(c.rank());
  const Vector px = range.transpose() * x;
  double sum = 0.0;
  for (Index i = 0; i < c.rank(); ++i) sum += c.eigenvalues()(i) * px(i) * px(i);
  return sum;
}

Metric psd_power(const Metric& c, double exponent, KernelPolicy policy) {
  if (exponent < 0.0 && c.has_kernel() && policy == KernelPolicy::kStrict) {
    throw Error(ErrorCode::kSingularMetric,
                "singular metric: rank " + std::to_string(c.rank()) + " of " + std::to_string(c.dim()));
  }
  Vector values = c.eigenvalues();
  for (Index i = 0; i < values.size(); ++i) {
    const double v = values(i);
    if (v <= 0.0) continue;
    values(i) = exponent == 0.5 ? std::sqrt(v) : std::pow(v, exponent);
  }
  return Metric(Metric::Spectral{}, c.eigenvectors(), std::move(values), c.rank_tol());
}

Matrix sherman_morrison_inverse(const RankOneUpdate& update) {
  const Matrix& base_inv = update.base_inverse;
  if (base_inv.rows() != base_inv.cols() || base_inv.rows() != update.vector.size()) {
    throw Error(ErrorCode::kDimensionMismatch, "rank-one update dimensions do not match");
  }
  const Vector bu = base_inv * update.vector;
  const double denominator = 1.0 + update.scale * update.vector.dot(bu);
  if (std::abs(denominator) <= 1e-12) {
    throw Error(ErrorCode::kUpdateSingular, "update singular: 1 + s u^T B^-1 u = " + format_double(denominator));
  }
  const Vector bu_t = base_inv.transpose() * update.vector;
  return base_inv - (update.scale / denominator) * bu * bu_t.transpose();
}

Matrix centering_operator(Index n) {
  return Matrix::Identity(n, n) - Matrix::Constant(n, n, 1.0 / static_cast<double>(n));
}

Index column_rank(const MatrixRef& a, double rel_tol) {
  if (a.cols() == 0) return 0;
  Eigen::JacobiSVD<Matrix> svd(a);
  const Vector& s = svd.singularValues();
  if (s.size() == 0 || s(0) == 0.0) return 0;
  Index r = 0;
  for (Index i = 0; i < s.size(); ++i) {
    if (s(i) > rel_tol * s(0)) ++r;
  }
  return r;
}

bool full_column_rank(const MatrixRef& a, double rel_tol) {
  return a.rows() >= a.cols() && column_rank(a, rel_tol) == a.cols();
}

bool is_symmetric(const MatrixRef& c, double rel_tol) {
  if (c.rows() != c.cols()) return false;
  const double bound = rel_tol * c.cwiseAbs().maxCoeff();
  return (c - c.transpose()).cwiseAbs().maxCoeff() <= bound;
}

Matrix read_matrix(std::istream& in) {
  std::string line;
  std::size_t line_no = 0;
  auto next_content_line = [&]() -> bool {
    while (std::getline(in, line)) {
      ++line_no;
      const auto first = line.find_first_not_of(" \t\r");
      if (first != std::string::npos && line[first] != '#') return true;
    }
    return false;
  };

  if (!next_content_line()) throw Error(ErrorCode::kIo, "matrix: missing 'rows cols' header");
  std::istringstream header(line);
  long long rows = -1;
  long long cols = -1;
  if (!(header >> rows >> cols) || rows < 0 || cols < 0) {
    throw Error(ErrorCode::kIo, "matrix line " + std::to_string(line_no) + ": expected 'rows cols'");
  }

  Matrix m(rows, cols);
  for (long long r = 0; r < rows; ++r) {
    if (!next_content_line()) {
      throw Error(ErrorCode::kIo, "matrix: expected " + std::to_string(rows) + " rows, found " + std::to_string(r));
    }
    const char* p = line.data();
    const char* end = line.data() + line.size();
    long long c = 0;
    while (true) {
      while (p < end && (*p == ' ' || *p == '\t' || *p == '\r' || *p == ',')) ++p;
      if (p >= end) break;
      if (*p == '+') ++p;
      double value = 0.0;
      const auto result = std::from_chars(p, end, value);
      if (result.ec != std::errc()) {
        throw Error(ErrorCode::kIo, "matrix line " + std::to_string(line_no) + ": invalid number");
      }
      if (c >= cols) {
        throw Error(ErrorCode::kIo, "matrix line " + std::to_string(line_no) + ": too many columns");
      }
      m(r, c++) = value;
      p = result.ptr;
    }
    if (c != cols) {
      throw Error(ErrorCode::kIo, "matrix line " + std::to_string(line_no) + ": expected " +
                                      std::to_string(cols) + " columns, found " + std::to_string(c));
    }
  }
  return m;
}

void write_matrix(std::ostream& out, const MatrixRef& m) {
  out << m.rows() << ' ' << m.cols() << '\n';
  for (Index r = 0; r < m.rows(); ++r) {
    for (Index c = 0; c < m.cols(); ++c) {
      if (c > 0) out << ' ';
      out << format_double(m(r, c));
    }
    out << '\n';
  }
}

Matrix load_matrix(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "cannot open matrix file '" + path + "'");
  try {
    return read_matrix(in);
  } catch (const Error& e) {
    throw Error(e.code(), path + ": " + e.what());
  }
}

void save_matrix(const std::string& path, const MatrixRef& m) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIo, "cannot write matrix file '" + path + "'");
  write_matrix(out, m);
}

std::string format_double(double value) {
  char buffer[64];
  const auto result = std::to_chars(buffer, buffer + sizeof(buffer), value);
  return std::string(buffer, result.ptr);
}

}  // namespace dipscan::linalg
