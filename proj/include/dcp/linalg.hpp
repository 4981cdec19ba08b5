#pragma once

#include <cstddef>
#include <utility>
#include <vector>

namespace dcp {

/// Small dense row-major matrix. Everything in this project is at most a few
/// hundred rows, so no attempt is made at blocking or sparsity.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  static Matrix identity(std::size_t n);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }

  double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

  const std::vector<double>& data() const { return data_; }

  Matrix transposed() const;
  Matrix operator*(const Matrix& rhs) const;
  std::vector<double> operator*(const std::vector<double>& v) const;

  double max_abs() const;
  double frobenius_norm() const;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

struct EigenDecomposition {
  std::vector<double> values;  // descending
  Matrix vectors;              // column j pairs with values[j]
};

/// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations, sorted in
/// descending order. Throws std::invalid_argument when the input is not
/// symmetric within 1e-10 (relative to the largest entry magnitude).
std::vector<double> symmetric_eigenvalues(const Matrix& s);

/// Same Jacobi sweep, keeping the accumulated rotations as eigenvectors.
EigenDecomposition symmetric_eigen(const Matrix& s);

/// (sigma_max, smallest nonzero sigma) of a general matrix, computed from the
/// eigenvalues of M*M^T. Singular values below 1e-9 * sigma_max count as zero.
/// Rejects the all-zero matrix.
std::pair<double, double> singular_values(const Matrix& m);

/// Solves S*x = b for symmetric positive semidefinite S via its eigensystem,
/// dropping eigenvalues below rel_cut * lambda_max (pseudo-inverse action).
std::vector<double> solve_spd_pseudo(const Matrix& s, const std::vector<double>& b,
                                     double rel_cut = 1e-10);

double dot(const std::vector<double>& a, const std::vector<double>& b);
double norm2(const std::vector<double>& a);

}  // namespace dcp
