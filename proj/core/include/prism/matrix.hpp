#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string_view>
#include <vector>

#include "prism/rng.hpp"

namespace prism::num {

// Dense row-major matrix of doubles. Small and deliberately plain: the
// networks in this project are tiny and the win is having every operation
// auditable against hand formulas.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols);  // zero-filled
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);
  Matrix(std::initializer_list<std::initializer_list<double>> rows);

  static Matrix row_vector(std::vector<double> v);
  static Matrix col_vector(std::vector<double> v);

  double& operator()(std::size_t r, std::size_t c) {
    return data_[r * cols_ + c];
  }
  double operator()(std::size_t r, std::size_t c) const {
    return data_[r * cols_ + c];
  }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  std::vector<double>& data() { return data_; }
  const std::vector<double>& data() const { return data_; }

  std::span<double> row(std::size_t r) {
    return {data_.data() + r * cols_, cols_};
  }
  std::span<const double> row(std::size_t r) const {
    return {data_.data() + r * cols_, cols_};
  }

  bool same_shape(const Matrix& other) const {
    return rows_ == other.rows_ && cols_ == other.cols_;
  }

  void fill(double v);
  void set_zero() { fill(0.0); }

  bool operator==(const Matrix& other) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

Matrix matmul(const Matrix& a, const Matrix& b);
Matrix transpose(const Matrix& m);

// Entries i.i.d. uniform on [-sqrt(6/(rows+cols)), +sqrt(6/(rows+cols))].
Matrix xavier_uniform_init(std::size_t rows, std::size_t cols, SplitRng& rng);

// Throws NumericError naming `what` if any entry is NaN or infinite.
void ensure_finite(const Matrix& m, std::string_view what);
void ensure_finite(std::span<const double> v, std::string_view what);

double max_abs(const Matrix& m);
double max_abs_diff(const Matrix& a, const Matrix& b);

double dot(std::span<const double> a, std::span<const double> b);

}  // namespace prism::num
