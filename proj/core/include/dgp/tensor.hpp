#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace dgp {

using Shape = std::vector<std::size_t>;
using RowMatrix =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixMap = Eigen::Map<RowMatrix>;
using ConstMatrixMap = Eigen::Map<const RowMatrix>;

std::string shape_string(const Shape& shape);

/// Dense row-major array of doubles with shape metadata.
///
/// Rank 0 is a scalar, rank 1 a vector and rank 2 a matrix. Higher ranks can
/// be stored but the matrix views refuse them. A rank-1 tensor of length n is
/// viewed as an n x 1 column by matrix().
class Tensor {
 public:
  Tensor() : data_(1, 0.0) {}
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> data);

  static Tensor scalar(double value);
  static Tensor vector(std::vector<double> values);
  static Tensor matrix(std::size_t rows, std::size_t cols,
                       std::vector<double> row_major);
  static Tensor identity(std::size_t n);

  template <typename Derived>
  static Tensor from_eigen(const Eigen::MatrixBase<Derived>& m) {
    Tensor t(Shape{static_cast<std::size_t>(m.rows()),
                   static_cast<std::size_t>(m.cols())});
    t.matrix() = m;
    return t;
  }

  template <typename Derived>
  static Tensor vector_from_eigen(const Eigen::MatrixBase<Derived>& v) {
    Tensor t(Shape{static_cast<std::size_t>(v.size())});
    for (Eigen::Index i = 0; i < v.size(); ++i) t.data_[i] = v(i);
    return t;
  }

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t size() const noexcept { return data_.size(); }
  std::size_t rows() const noexcept;
  std::size_t cols() const noexcept;

  std::span<const double> data() const noexcept { return data_; }
  std::span<double> data() noexcept { return data_; }

  double operator[](std::size_t i) const { return data_[i]; }
  double& operator[](std::size_t i) { return data_[i]; }
  double operator()(std::size_t r, std::size_t c) const {
    return data_[r * cols() + c];
  }
  double& operator()(std::size_t r, std::size_t c) {
    return data_[r * cols() + c];
  }

  /// Value of a single-element tensor.
  double item() const;

  ConstMatrixMap matrix() const;
  MatrixMap matrix();

  Tensor reshaped(Shape shape) const;
  bool all_finite() const noexcept;
  std::string shape_string() const { return dgp::shape_string(shape_); }

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  Shape shape_;
  std::vector<double> data_;
};

std::size_t shape_size(const Shape& shape) noexcept;

}  // namespace dgp
