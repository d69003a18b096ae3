#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <utility>
#include <vector>

#include "seal/errors.hpp"

namespace seal::num {

// Dense row-major matrix of doubles. Sized for the small feature
// covariances used here (k <= ~100), not for BLAS-grade workloads.
class Matrix {
public:
  Matrix() : rows_(0), cols_(0) {}
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
      : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows_ * cols_)
      throw ShapeMismatch("Matrix: data length != rows*cols");
  }

  static Matrix identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
  }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  bool square() const { return rows_ == cols_; }

  double& operator()(std::size_t i, std::size_t j) {
    return data_[i * cols_ + j];
  }
  double operator()(std::size_t i, std::size_t j) const {
    return data_[i * cols_ + j];
  }

  const std::vector<double>& data() const { return data_; }

  Matrix transpose() const {
    Matrix t(cols_, rows_);
    for (std::size_t i = 0; i < rows_; ++i)
      for (std::size_t j = 0; j < cols_; ++j) t(j, i) = (*this)(i, j);
    return t;
  }

  Matrix operator*(const Matrix& o) const {
    if (cols_ != o.rows_) throw ShapeMismatch("Matrix multiply shape");
    Matrix r(rows_, o.cols_);
    for (std::size_t i = 0; i < rows_; ++i)
      for (std::size_t k = 0; k < cols_; ++k) {
        const double a = (*this)(i, k);
        if (a == 0.0) continue;
        for (std::size_t j = 0; j < o.cols_; ++j) r(i, j) += a * o(k, j);
      }
    return r;
  }

  Matrix operator+(const Matrix& o) const {
    if (rows_ != o.rows_ || cols_ != o.cols_)
      throw ShapeMismatch("Matrix add shape");
    Matrix r = *this;
    for (std::size_t i = 0; i < data_.size(); ++i) r.data_[i] += o.data_[i];
    return r;
  }

  Matrix operator-(const Matrix& o) const {
    if (rows_ != o.rows_ || cols_ != o.cols_)
      throw ShapeMismatch("Matrix subtract shape");
    Matrix r = *this;
    for (std::size_t i = 0; i < data_.size(); ++i) r.data_[i] -= o.data_[i];
    return r;
  }

  double trace() const {
    if (!square()) throw NotSquare("trace");
    double t = 0.0;
    for (std::size_t i = 0; i < rows_; ++i) t += (*this)(i, i);
    return t;
  }

  double frobenius() const {
    double s = 0.0;
    for (double v : data_) s += v * v;
    return std::sqrt(s);
  }

  double max_asymmetry() const {
    if (!square()) throw NotSquare("max_asymmetry");
    double m = 0.0;
    for (std::size_t i = 0; i < rows_; ++i)
      for (std::size_t j = i + 1; j < cols_; ++j)
        m = std::max(m, std::abs((*this)(i, j) - (*this)(j, i)));
    return m;
  }

private:
  std::size_t rows_, cols_;
  std::vector<double> data_;
};

struct EigResult {
  std::vector<double> eigenvalues;  // descending
  Matrix eigenvectors;              // columns match eigenvalues
};

// Symmetric eigendecomposition via cyclic Jacobi rotations; iteration cap
// of 100 sweeps. Eigenvalues returned in descending order.
inline EigResult sym_eig(const Matrix& m, double tol = 1e-9) {
  if (!m.square()) throw NotSquare("sym_eig");
  const std::size_t n = m.rows();
  if (m.max_asymmetry() > tol) throw NotSymmetric("sym_eig");

  // Work on the symmetrized copy so round-off asymmetry within tol
  // cannot leak into the result.
  Matrix a(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) a(i, j) = 0.5 * (m(i, j) + m(j, i));
  Matrix v = Matrix::identity(n);

  const int max_sweeps = 100;
  bool converged = (n <= 1);
  for (int sweep = 0; sweep < max_sweeps && !converged; ++sweep) {
    double off = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j) off += a(i, j) * a(i, j);
    if (std::sqrt(off) <= 1e-15 * std::max(1.0, a.frobenius())) {
      converged = true;
      break;
    }
    for (std::size_t p = 0; p < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        const double apq = a(p, q);
        if (apq == 0.0) continue;
        const double app = a(p, p), aqq = a(q, q);
        const double theta = (aqq - app) / (2.0 * apq);
        const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                         (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (std::size_t k = 0; k < n; ++k) {
          const double akp = a(k, p), akq = a(k, q);
          a(k, p) = c * akp - s * akq;
          a(k, q) = s * akp + c * akq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double apk = a(p, k), aqk = a(q, k);
          a(p, k) = c * apk - s * aqk;
          a(q, k) = s * apk + c * aqk;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double vkp = v(k, p), vkq = v(k, q);
          v(k, p) = c * vkp - s * vkq;
          v(k, q) = s * vkp + c * vkq;
        }
      }
    }
  }
  if (!converged) {
    double off = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j) off += a(i, j) * a(i, j);
    if (std::sqrt(off) > 1e-12 * std::max(1.0, a.frobenius()))
      throw NoConvergence("sym_eig: Jacobi sweep cap reached");
  }

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t i, std::size_t j) { return a(i, i) > a(j, j); });

  EigResult r;
  r.eigenvalues.resize(n);
  r.eigenvectors = Matrix(n, n);
  for (std::size_t j = 0; j < n; ++j) {
    r.eigenvalues[j] = a(order[j], order[j]);
    for (std::size_t i = 0; i < n; ++i)
      r.eigenvectors(i, j) = v(i, order[j]);
  }
  return r;
}

// Principal square root of a symmetric PSD matrix. Eigenvalues in
// [-eps, 0) are clamped to 0; anything below -eps is rejected, where
// eps = 1e-9 scaled by the dominant eigenvalue magnitude.
inline Matrix sqrtm_psd(const Matrix& m) {
  if (!m.square()) throw NotSquare("sqrtm_psd");
  const EigResult e = sym_eig(m, 1e-6 * std::max(1.0, m.frobenius()));
  double lam_max = 0.0;
  for (double l : e.eigenvalues) lam_max = std::max(lam_max, std::abs(l));
  const double eps = 1e-9 * std::max(1.0, lam_max);
  const std::size_t n = m.rows();
  Matrix d(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    double l = e.eigenvalues[i];
    if (l < -eps) throw IndefiniteInput("sqrtm_psd: negative eigenvalue");
    d(i, i) = std::sqrt(std::max(l, 0.0));
  }
  return e.eigenvectors * d * e.eigenvectors.transpose();
}

// Column means and unbiased (n-1) covariance of an n x k sample matrix.
inline std::pair<std::vector<double>, Matrix> mean_cov(const Matrix& data) {
  const std::size_t n = data.rows(), k = data.cols();
  if (n < 2) throw TooFewSamples("mean_cov: need n >= 2");
  std::vector<double> mu(k, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < k; ++j) mu[j] += data(i, j);
  for (std::size_t j = 0; j < k; ++j) mu[j] /= static_cast<double>(n);
  Matrix sigma(k, k);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t a = 0; a < k; ++a) {
      const double da = data(i, a) - mu[a];
      for (std::size_t b = a; b < k; ++b) {
        sigma(a, b) += da * (data(i, b) - mu[b]);
      }
    }
  }
  for (std::size_t a = 0; a < k; ++a)
    for (std::size_t b = a; b < k; ++b) {
      sigma(a, b) /= static_cast<double>(n - 1);
      sigma(b, a) = sigma(a, b);
    }
  return {mu, sigma};
}

}  // namespace seal::num
