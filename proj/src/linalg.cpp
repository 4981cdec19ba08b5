#include "dcp/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace dcp {

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

Matrix Matrix::transposed() const {
  Matrix t(cols_, rows_);
  for (std::size_t i = 0; i < rows_; ++i)
    for (std::size_t j = 0; j < cols_; ++j) t(j, i) = (*this)(i, j);
  return t;
}

Matrix Matrix::operator*(const Matrix& rhs) const {
  if (cols_ != rhs.rows_) throw std::invalid_argument("matrix product: shape mismatch");
  Matrix out(rows_, rhs.cols_);
  for (std::size_t i = 0; i < rows_; ++i) {
    for (std::size_t k = 0; k < cols_; ++k) {
      const double a = (*this)(i, k);
      if (a == 0.0) continue;
      for (std::size_t j = 0; j < rhs.cols_; ++j) out(i, j) += a * rhs(k, j);
    }
  }
  return out;
}

std::vector<double> Matrix::operator*(const std::vector<double>& v) const {
  if (cols_ != v.size()) throw std::invalid_argument("matrix-vector product: shape mismatch");
  std::vector<double> out(rows_, 0.0);
  for (std::size_t i = 0; i < rows_; ++i) {
    double acc = 0.0;
    for (std::size_t j = 0; j < cols_; ++j) acc += (*this)(i, j) * v[j];
    out[i] = acc;
  }
  return out;
}

double Matrix::max_abs() const {
  double m = 0.0;
  for (double v : data_) m = std::max(m, std::abs(v));
  return m;
}

double Matrix::frobenius_norm() const {
  double acc = 0.0;
  for (double v : data_) acc += v * v;
  return std::sqrt(acc);
}

namespace {

void require_symmetric(const Matrix& s) {
  if (s.rows() != s.cols()) throw std::invalid_argument("eigen: matrix not square");
  const double tol = 1e-10 * std::max(1.0, s.max_abs());
  for (std::size_t i = 0; i < s.rows(); ++i)
    for (std::size_t j = i + 1; j < s.cols(); ++j)
      if (std::abs(s(i, j) - s(j, i)) > tol)
        throw std::invalid_argument("eigen: matrix not symmetric within tolerance");
}

double off_diagonal_norm(const Matrix& a) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j)
      if (i != j) acc += a(i, j) * a(i, j);
  return std::sqrt(acc);
}

// Cyclic Jacobi. Sweeps over all upper-triangle pairs until the off-diagonal
// Frobenius mass drops below 1e-12 * ||S||_F.
EigenDecomposition jacobi(const Matrix& s, bool want_vectors) {
  require_symmetric(s);
  const std::size_t n = s.rows();
  Matrix a = s;
  Matrix v = want_vectors ? Matrix::identity(n) : Matrix();
  const double stop = 1e-12 * std::max(s.frobenius_norm(), 1e-300);
  const int max_sweeps = 100;

  int sweep = 0;
  while (off_diagonal_norm(a) > stop) {
    if (++sweep > max_sweeps) throw std::runtime_error("jacobi: failed to converge");
    for (std::size_t p = 0; p + 1 < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        const double apq = a(p, q);
        if (apq == 0.0) continue;
        const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
        // Smaller-magnitude root keeps rotations well conditioned.
        double t = (theta >= 0.0 ? 1.0 : -1.0) /
                   (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double sn = t * c;
        for (std::size_t k = 0; k < n; ++k) {
          const double akp = a(k, p);
          const double akq = a(k, q);
          a(k, p) = c * akp - sn * akq;
          a(k, q) = sn * akp + c * akq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double apk = a(p, k);
          const double aqk = a(q, k);
          a(p, k) = c * apk - sn * aqk;
          a(q, k) = sn * apk + c * aqk;
        }
        if (want_vectors) {
          for (std::size_t k = 0; k < n; ++k) {
            const double vkp = v(k, p);
            const double vkq = v(k, q);
            v(k, p) = c * vkp - sn * vkq;
            v(k, q) = sn * vkp + c * vkq;
          }
        }
      }
    }
  }

  EigenDecomposition out;
  out.values.resize(n);
  for (std::size_t i = 0; i < n; ++i) out.values[i] = a(i, i);

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t x, std::size_t y) { return out.values[x] > out.values[y]; });
  std::vector<double> sorted(n);
  for (std::size_t i = 0; i < n; ++i) sorted[i] = out.values[order[i]];
  out.values = std::move(sorted);
  if (want_vectors) {
    out.vectors = Matrix(n, n);
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t k = 0; k < n; ++k) out.vectors(k, j) = v(k, order[j]);
  }
  return out;
}

}  // namespace

std::vector<double> symmetric_eigenvalues(const Matrix& s) { return jacobi(s, false).values; }

EigenDecomposition symmetric_eigen(const Matrix& s) { return jacobi(s, true); }

std::pair<double, double> singular_values(const Matrix& m) {
  if (m.max_abs() == 0.0) throw std::invalid_argument("singular_values: all-zero matrix");
  const Matrix gram = m * m.transposed();
  std::vector<double> ev = symmetric_eigenvalues(gram);
  const double sigma_max = std::sqrt(std::max(ev.front(), 0.0));
  // Zero detection happens on the Gram eigenvalues: a true zero comes back
  // from Jacobi as ~eps*lambda_max, far above (1e-9*sigma_max)^2.
  const double sigma_cut = 1e-9 * sigma_max;
  const double lambda_cut = 1e-12 * std::max(ev.front(), 0.0);
  double sigma_min = sigma_max;
  for (double lambda : ev) {
    const double sigma = std::sqrt(std::max(lambda, 0.0));
    if (sigma > sigma_cut && lambda > lambda_cut) sigma_min = sigma;
  }
  return {sigma_max, sigma_min};
}

std::vector<double> solve_spd_pseudo(const Matrix& s, const std::vector<double>& b,
                                     double rel_cut) {
  const EigenDecomposition eig = symmetric_eigen(s);
  const std::size_t n = b.size();
  if (s.rows() != n) throw std::invalid_argument("solve_spd_pseudo: shape mismatch");
  const double cut = rel_cut * std::max(eig.values.front(), 0.0);
  std::vector<double> x(n, 0.0);
  for (std::size_t j = 0; j < n; ++j) {
    if (eig.values[j] <= cut) continue;
    double proj = 0.0;
    for (std::size_t k = 0; k < n; ++k) proj += eig.vectors(k, j) * b[k];
    proj /= eig.values[j];
    for (std::size_t k = 0; k < n; ++k) x[k] += proj * eig.vectors(k, j);
  }
  return x;
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

double norm2(const std::vector<double>& a) { return std::sqrt(dot(a, a)); }

}  // namespace dcp
