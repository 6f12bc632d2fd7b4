#pragma once

#include <algorithm>
#include <cstddef>
#include <functional>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace cellpk {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_size(const Shape& s) {
  return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string shape_string(const Shape& s) {
  std::string out = "[";
  for (std::size_t i = 0; i < s.size(); ++i) out += (i ? "x" : "") + std::to_string(s[i]);
  return out + "]";
}

/// Dense row-major array. Batched image activations are N x C x H x W.
template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;
  explicit Tensor(Shape shape, T fill = T{0}) : shape_(std::move(shape)), values_(shape_size(shape_), fill) {}
  Tensor(Shape shape, std::vector<T> values) : shape_(std::move(shape)), values_(std::move(values)) {
    if (values_.size() != shape_size(shape_)) throw std::invalid_argument("Tensor: value count does not match shape");
  }

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t dim(std::size_t i) const { return shape_[i]; }
  std::size_t size() const { return values_.size(); }
  bool empty() const { return values_.empty(); }

  T* data() { return values_.data(); }
  const T* data() const { return values_.data(); }
  std::span<T> values() { return values_; }
  std::span<const T> values() const { return values_; }
  std::vector<T>& storage() { return values_; }
  const std::vector<T>& storage() const { return values_; }

  T& operator[](std::size_t i) { return values_[i]; }
  const T& operator[](std::size_t i) const { return values_[i]; }

  void fill(T v) { std::fill(values_.begin(), values_.end(), v); }

  /// Same values viewed under a new shape of equal size.
  void reshape(Shape shape) {
    if (shape_size(shape) != values_.size()) throw std::invalid_argument("Tensor::reshape: size mismatch");
    shape_ = std::move(shape);
  }

  template <typename U>
  Tensor<U> cast() const {
    return Tensor<U>(shape_, std::vector<U>(values_.begin(), values_.end()));
  }

  bool operator==(const Tensor&) const = default;

 private:
  Shape shape_;
  std::vector<T> values_;
};

}  // namespace cellpk
