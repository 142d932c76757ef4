#include "pfnet/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "pfnet/error.hpp"

namespace pfnet {

std::string Shape::str() const {
  return "(" + std::to_string(n) + ", " + std::to_string(c) + ", " +
         std::to_string(h) + ", " + std::to_string(w) + ")";
}

Tensor::Tensor(Shape shape, double fill) : shape_(shape) {
  if (shape.n < 0 || shape.c < 0 || shape.h < 0 || shape.w < 0) {
    throw DimensionError("negative extent in shape " + shape.str());
  }
  data_.assign(shape.numel(), fill);
}

Tensor::Tensor(Shape shape, std::vector<double> values)
    : shape_(shape), data_(std::move(values)) {
  if (data_.size() != shape.numel()) {
    throw DimensionError("value count " + std::to_string(data_.size()) +
                         " does not match shape " + shape.str());
  }
}

Tensor Tensor::reshaped(Shape shape) const {
  if (shape.numel() != shape_.numel()) {
    throw DimensionError("cannot reshape " + shape_.str() + " to " +
                         shape.str());
  }
  Tensor out = *this;
  out.shape_ = shape;
  return out;
}

Tensor Tensor::batch_item(int n) const {
  if (n < 0 || n >= shape_.n) {
    throw DimensionError("batch index out of range");
  }
  Shape s = shape_;
  s.n = 1;
  const std::size_t per = s.numel();
  std::vector<double> v(data_.begin() + static_cast<std::ptrdiff_t>(per * n),
                        data_.begin() + static_cast<std::ptrdiff_t>(per * (n + 1)));
  return Tensor(s, std::move(v));
}

void Tensor::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

double Tensor::sum() const {
  return std::accumulate(data_.begin(), data_.end(), 0.0);
}

double Tensor::mean() const {
  return data_.empty() ? 0.0 : sum() / static_cast<double>(data_.size());
}

double Tensor::max_abs() const {
  double m = 0.0;
  for (double v : data_) m = std::max(m, std::abs(v));
  return m;
}

bool Tensor::all_finite() const {
  return std::all_of(data_.begin(), data_.end(),
                     [](double v) { return std::isfinite(v); });
}

void require_same_shape(const Shape& a, const Shape& b, const char* what) {
  if (!(a == b)) {
    throw DimensionError(std::string(what) + ": shape " + a.str() +
                         " does not match " + b.str());
  }
}

Tensor stack_batch(std::span<const Tensor> items) {
  if (items.empty()) throw DimensionError("stack_batch: no tensors");
  Shape s = items.front().shape();
  int total = 0;
  for (const auto& t : items) {
    Shape q = t.shape();
    if (q.c != s.c || q.h != s.h || q.w != s.w) {
      throw DimensionError("stack_batch: mismatched item shape " + q.str());
    }
    total += q.n;
  }
  s.n = total;
  std::vector<double> v;
  v.reserve(s.numel());
  for (const auto& t : items) v.insert(v.end(), t.data(), t.data() + t.size());
  return Tensor(s, std::move(v));
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  require_same_shape(a.shape(), b.shape(), "max_abs_diff");
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    m = std::max(m, std::abs(a[i] - b[i]));
  }
  return m;
}

}  // namespace pfnet
