#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <cstring>
#include <initializer_list>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace gsnn {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixMap = Eigen::Map<RowMatrix>;
using ConstMatrixMap = Eigen::Map<const RowMatrix>;

/// Raised when an operation would leave a tensor with NaN or Inf entries.
class NonFiniteError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Storage aligned for the widest SIMD width. Eigen peels vectorized
/// reductions up to the first aligned element, so a fixed alignment keeps
/// summation order, and therefore results, independent of where the heap
/// happened to place a buffer.
using Storage = std::vector<double, Eigen::aligned_allocator<double>>;

/// Dense row-major tensor of 64-bit floats.
///
/// Rank 0 is a scalar holding one value. Rank 1 tensors are treated as a single
/// row by the matrix views, rank 2 as [rows x cols]. Higher ranks are stored
/// and serialized but only flattened views are offered.
class Tensor {
 public:
  using Shape = std::vector<std::size_t>;

  Tensor() : shape_{0} {}

  explicit Tensor(Shape shape) : shape_(std::move(shape)), data_(count(shape_), 0.0) {}

  Tensor(Shape shape, const std::vector<double>& data) : Tensor(std::move(shape), Storage(data.begin(), data.end())) {}

  Tensor(Shape shape, Storage data) : shape_(std::move(shape)), data_(std::move(data)) {
    if (data_.size() != count(shape_)) {
      throw std::invalid_argument("tensor: data length " + std::to_string(data_.size()) +
                                  " does not match shape " + shape_string(shape_));
    }
  }

  static Tensor scalar(double v) { return Tensor(Shape{}, Storage{v}); }
  static Tensor vector(const std::vector<double>& v) { return Tensor(Shape{v.size()}, v); }
  static Tensor matrix(std::size_t rows, std::size_t cols) { return Tensor(Shape{rows, cols}); }
  static Tensor matrix(std::size_t rows, std::size_t cols, const std::vector<double>& v) {
    return Tensor(Shape{rows, cols}, v);
  }
  static Tensor matrix(std::size_t rows, std::size_t cols, std::initializer_list<double> v) {
    return Tensor(Shape{rows, cols}, Storage(v));
  }
  static Tensor matrix(std::size_t rows, std::size_t cols, Storage v) { return Tensor(Shape{rows, cols}, std::move(v)); }
  static Tensor zeros_like(const Tensor& t) { return Tensor(t.shape_); }

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return data_.size(); }
  std::size_t extent(std::size_t axis) const { return shape_.at(axis); }

  /// Rows of the matrix view: leading extent for rank 2, otherwise 1.
  std::size_t rows() const { return shape_.size() >= 2 ? shape_[0] : 1; }
  std::size_t cols() const {
    if (shape_.size() < 2) return data_.size();
    return std::accumulate(shape_.begin() + 1, shape_.end(), std::size_t{1}, std::multiplies<>());
  }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  Storage& values() { return data_; }
  const Storage& values() const { return data_; }
  std::vector<double> to_vector() const { return {data_.begin(), data_.end()}; }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }
  double& at(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }
  double at(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }

  double item() const {
    if (data_.size() != 1) throw std::invalid_argument("tensor: item() on tensor of shape " + shape_string(shape_));
    return data_[0];
  }

  MatrixMap mat() { return MatrixMap(data_.data(), static_cast<Eigen::Index>(rows()), static_cast<Eigen::Index>(cols())); }
  ConstMatrixMap mat() const {
    return ConstMatrixMap(data_.data(), static_cast<Eigen::Index>(rows()), static_cast<Eigen::Index>(cols()));
  }

  bool all_finite() const {
    for (double v : data_)
      if (!std::isfinite(v)) return false;
    return true;
  }

  void fill(double v) { std::fill(data_.begin(), data_.end(), v); }

  /// Bitwise equality of shape and payload.
  friend bool operator==(const Tensor& a, const Tensor& b) {
    if (a.shape_ != b.shape_) return false;
    return std::memcmp(a.data_.data(), b.data_.data(), a.data_.size() * sizeof(double)) == 0;
  }

  static std::size_t count(const Shape& s) {
    return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>());
  }

  static std::string shape_string(const Shape& s) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
    os << ']';
    return os.str();
  }
  std::string shape_string() const { return shape_string(shape_); }

 private:
  Shape shape_;
  Storage data_;
};

}  // namespace gsnn
