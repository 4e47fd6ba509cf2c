#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace claws {

/// Dense row-major matrix of doubles. Vectors are represented as 1×n rows
/// (biases) or n×1 columns (per-segment scores).
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> values);

  /// Builds a matrix from nested rows; all rows must share one length.
  static Matrix from_rows(const std::vector<std::vector<double>>& rows);
  static Matrix row_vector(std::span<const double> values);
  static Matrix column_vector(std::span<const double> values);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return values_.size(); }
  bool empty() const { return values_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return values_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return values_[r * cols_ + c]; }

  std::span<double> values() { return values_; }
  std::span<const double> values() const { return values_; }
  std::span<double> row(std::size_t r) { return {values_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {values_.data() + r * cols_, cols_}; }

  /// Copy of rows [first, first + count).
  Matrix slice_rows(std::size_t first, std::size_t count) const;

  void fill(double value);
  bool all_finite() const;
  bool same_shape(const Matrix& other) const {
    return rows_ == other.rows_ && cols_ == other.cols_;
  }

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> values_;
};

/// "r×c" for error messages.
std::string shape_string(const Matrix& m);

/// Throws DimensionError naming `what` unless `a` and `b` have equal shapes.
void require_same_shape(const Matrix& a, const Matrix& b, const char* what);

/// Vertically stacks matrices with equal column counts.
Matrix vstack(std::span<const Matrix> parts);

}  // namespace claws
