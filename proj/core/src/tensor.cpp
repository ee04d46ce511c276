#include "dgp/tensor.hpp"

#include <cmath>
#include <sstream>

#include "dgp/errors.hpp"

namespace dgp {

std::size_t shape_size(const Shape& shape) noexcept {
  std::size_t n = 1;
  for (auto extent : shape) n *= extent;
  return n;
}

std::string shape_string(const Shape& shape) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out << ',';
    out << shape[i];
  }
  out << ']';
  return out.str();
}

Tensor::Tensor(Shape shape, double fill)
    : shape_(std::move(shape)), data_(shape_size(shape_), fill) {}

Tensor::Tensor(Shape shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (data_.size() != shape_size(shape_)) {
    throw ShapeError("tensor data length " + std::to_string(data_.size()) +
                     " does not match shape " + dgp::shape_string(shape_));
  }
}

Tensor Tensor::scalar(double value) { return Tensor(Shape{}, {value}); }

Tensor Tensor::vector(std::vector<double> values) {
  const std::size_t n = values.size();
  return Tensor(Shape{n}, std::move(values));
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols,
                      std::vector<double> row_major) {
  return Tensor(Shape{rows, cols}, std::move(row_major));
}

Tensor Tensor::identity(std::size_t n) {
  Tensor t(Shape{n, n});
  for (std::size_t i = 0; i < n; ++i) t(i, i) = 1.0;
  return t;
}

std::size_t Tensor::rows() const noexcept {
  return shape_.empty() ? 1 : shape_[0];
}

std::size_t Tensor::cols() const noexcept {
  return shape_.size() == 2 ? shape_[1] : 1;
}

double Tensor::item() const {
  if (data_.size() != 1) {
    throw ShapeError("item() on tensor of shape " + shape_string());
  }
  return data_[0];
}

ConstMatrixMap Tensor::matrix() const {
  if (rank() > 2) throw ShapeError("matrix view of rank-" +
                                   std::to_string(rank()) + " tensor");
  return ConstMatrixMap(data_.data(), static_cast<Eigen::Index>(rows()),
                        static_cast<Eigen::Index>(cols()));
}

MatrixMap Tensor::matrix() {
  if (rank() > 2) throw ShapeError("matrix view of rank-" +
                                   std::to_string(rank()) + " tensor");
  return MatrixMap(data_.data(), static_cast<Eigen::Index>(rows()),
                   static_cast<Eigen::Index>(cols()));
}

Tensor Tensor::reshaped(Shape shape) const {
  return Tensor(std::move(shape), data_);
}

bool Tensor::all_finite() const noexcept {
  for (double v : data_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

}  // namespace dgp
