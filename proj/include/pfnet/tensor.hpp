#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace pfnet {

/// NCHW extent. Every tensor in the library is four dimensional; matrices
/// are stored as (batch, 1, rows, cols) and scalars as (1, 1, 1, 1).
struct Shape {
  int n = 1;
  int c = 1;
  int h = 1;
  int w = 1;

  std::size_t numel() const {
    return static_cast<std::size_t>(n) * c * h * w;
  }
  std::size_t plane() const { return static_cast<std::size_t>(h) * w; }
  bool operator==(const Shape&) const = default;
  std::string str() const;
};

/// Dense row-major (NCHW) tensor of 64-bit reals with value semantics.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> values);

  static Tensor zeros(Shape shape) { return Tensor(shape, 0.0); }
  static Tensor ones(Shape shape) { return Tensor(shape, 1.0); }
  static Tensor scalar(double v) { return Tensor(Shape{}, v); }

  const Shape& shape() const { return shape_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::span<double> values() { return data_; }
  std::span<const double> values() const { return data_; }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  std::size_t offset(int n, int c, int h, int w) const {
    return ((static_cast<std::size_t>(n) * shape_.c + c) * shape_.h + h) *
               shape_.w + w;
  }
  double& at(int n, int c, int h, int w) { return data_[offset(n, c, h, w)]; }
  double at(int n, int c, int h, int w) const {
    return data_[offset(n, c, h, w)];
  }

  double* plane(int n, int c) { return data_.data() + offset(n, c, 0, 0); }
  const double* plane(int n, int c) const {
    return data_.data() + offset(n, c, 0, 0);
  }

  /// Same values viewed under a new shape of identical element count.
  Tensor reshaped(Shape shape) const;
  /// Copy of batch item `n` as a (1, C, H, W) tensor.
  Tensor batch_item(int n) const;

  void fill(double v);
  double sum() const;
  double mean() const;
  double max_abs() const;
  bool all_finite() const;

 private:
  Shape shape_{0, 0, 0, 0};
  std::vector<double> data_;
};

/// Throws DimensionError unless the two shapes are equal.
void require_same_shape(const Shape& a, const Shape& b, const char* what);

/// Concatenates (1, C, H, W) or (N, C, H, W) tensors along the batch axis.
Tensor stack_batch(std::span<const Tensor> items);

/// Largest elementwise |a - b|; shapes must match.
double max_abs_diff(const Tensor& a, const Tensor& b);

}  // namespace pfnet
