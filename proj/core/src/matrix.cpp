#include "prism/matrix.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "prism/errors.hpp"

namespace prism::num {

Matrix::Matrix(std::size_t rows, std::size_t cols)
    : rows_(rows), cols_(cols), data_(rows * cols, 0.0) {}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows_ * cols_) {
    throw DimError("Matrix: data length " + std::to_string(data_.size()) +
                   " does not match " + std::to_string(rows_) + "x" +
                   std::to_string(cols_));
  }
}

Matrix::Matrix(std::initializer_list<std::initializer_list<double>> rows) {
  rows_ = rows.size();
  cols_ = rows_ == 0 ? 0 : rows.begin()->size();
  data_.reserve(rows_ * cols_);
  for (const auto& r : rows) {
    if (r.size() != cols_) throw DimError("Matrix: ragged initializer");
    data_.insert(data_.end(), r.begin(), r.end());
  }
}

Matrix Matrix::row_vector(std::vector<double> v) {
  std::size_t n = v.size();
  return Matrix(1, n, std::move(v));
}

Matrix Matrix::col_vector(std::vector<double> v) {
  std::size_t n = v.size();
  return Matrix(n, 1, std::move(v));
}

void Matrix::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) {
    throw DimError("matmul: inner dimensions disagree (" +
                   std::to_string(a.rows()) + "x" + std::to_string(a.cols()) +
                   " * " + std::to_string(b.rows()) + "x" +
                   std::to_string(b.cols()) + ")");
  }
  Matrix out(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t k = 0; k < a.cols(); ++k) {
      double aik = a(i, k);
      if (aik == 0.0) continue;
      for (std::size_t j = 0; j < b.cols(); ++j) {
        out(i, j) += aik * b(k, j);
      }
    }
  }
  ensure_finite(out, "matmul result");
  return out;
}

Matrix transpose(const Matrix& m) {
  Matrix out(m.cols(), m.rows());
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < m.cols(); ++j) out(j, i) = m(i, j);
  return out;
}

Matrix xavier_uniform_init(std::size_t rows, std::size_t cols, SplitRng& rng) {
  if (rows == 0 || cols == 0) {
    throw DimError("xavier_uniform_init: dimensions must be >= 1");
  }
  double bound = std::sqrt(6.0 / static_cast<double>(rows + cols));
  Matrix out(rows, cols);
  for (double& v : out.data()) v = rng.uniform(-bound, bound);
  return out;
}

void ensure_finite(std::span<const double> v, std::string_view what) {
  for (double x : v) {
    if (!std::isfinite(x)) {
      throw NumericError(std::string(what) + ": non-finite value");
    }
  }
}

void ensure_finite(const Matrix& m, std::string_view what) {
  ensure_finite(std::span<const double>(m.data()), what);
}

double max_abs(const Matrix& m) {
  double r = 0.0;
  for (double v : m.data()) r = std::max(r, std::abs(v));
  return r;
}

double max_abs_diff(const Matrix& a, const Matrix& b) {
  if (!a.same_shape(b)) throw DimError("max_abs_diff: shape mismatch");
  double r = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    r = std::max(r, std::abs(a.data()[i] - b.data()[i]));
  return r;
}

double dot(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw DimError("dot: length mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

}  // namespace prism::num
