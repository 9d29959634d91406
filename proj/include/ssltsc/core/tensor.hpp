#pragma once

#include <algorithm>
#include <cassert>
#include <cstddef>
#include <functional>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <vector>

namespace ssltsc {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>{});
}

inline std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ')';
  return os.str();
}

/// Dense row-major array with a runtime shape. Used for series batches
/// (b, c, t), activations and parameters alike.
template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;
  explicit Tensor(Shape shape, T fill = T{0})
      : shape_(std::move(shape)), data_(shape_size(shape_), fill) {}
  Tensor(Shape shape, std::vector<T> data) : shape_(std::move(shape)), data_(std::move(data)) {
    assert(data_.size() == shape_size(shape_));
  }

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t dim(std::size_t i) const { return shape_.at(i); }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  T* data() noexcept { return data_.data(); }
  const T* data() const noexcept { return data_.data(); }
  std::span<T> values() noexcept { return data_; }
  std::span<const T> values() const noexcept { return data_; }
  std::vector<T>& storage() noexcept { return data_; }
  const std::vector<T>& storage() const noexcept { return data_; }

  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  T& at(std::size_t i, std::size_t j) { return data_[i * shape_[1] + j]; }
  const T& at(std::size_t i, std::size_t j) const { return data_[i * shape_[1] + j]; }
  T& at(std::size_t i, std::size_t j, std::size_t k) {
    return data_[(i * shape_[1] + j) * shape_[2] + k];
  }
  const T& at(std::size_t i, std::size_t j, std::size_t k) const {
    return data_[(i * shape_[1] + j) * shape_[2] + k];
  }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

  /// Same data, new shape of equal size.
  Tensor reshaped(Shape shape) const {
    assert(shape_size(shape) == data_.size());
    return Tensor(std::move(shape), data_);
  }

  /// Contiguous slice [begin, end) along the leading dimension.
  Tensor slice(std::size_t begin, std::size_t end) const {
    const std::size_t stride = shape_.empty() ? 1 : data_.size() / std::max<std::size_t>(shape_[0], 1);
    Shape s = shape_;
    s[0] = end - begin;
    return Tensor(std::move(s), std::vector<T>(data_.begin() + begin * stride, data_.begin() + end * stride));
  }

  /// Row (leading index) as a span.
  std::span<T> row(std::size_t i) {
    const std::size_t stride = data_.size() / shape_[0];
    return {data_.data() + i * stride, stride};
  }
  std::span<const T> row(std::size_t i) const {
    const std::size_t stride = data_.size() / shape_[0];
    return {data_.data() + i * stride, stride};
  }

  template <typename U>
  Tensor<U> cast() const {
    return Tensor<U>(shape_, std::vector<U>(data_.begin(), data_.end()));
  }

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  Shape shape_;
  std::vector<T> data_;
};

/// Gathers rows `idx` of a tensor along the leading dimension.
template <typename T>
Tensor<T> gather_rows(const Tensor<T>& src, std::span<const std::size_t> idx) {
  Shape s = src.shape();
  const std::size_t stride = src.size() / s[0];
  s[0] = idx.size();
  Tensor<T> out(s);
  for (std::size_t i = 0; i < idx.size(); ++i) {
    std::copy_n(src.data() + idx[i] * stride, stride, out.data() + i * stride);
  }
  return out;
}

/// Concatenates tensors along the leading dimension.
template <typename T>
Tensor<T> concat_rows(std::span<const Tensor<T>> parts) {
  assert(!parts.empty());
  Shape s = parts.front().shape();
  std::size_t rows = 0;
  for (const auto& p : parts) rows += p.dim(0);
  s[0] = rows;
  Tensor<T> out(s);
  T* dst = out.data();
  for (const auto& p : parts) dst = std::copy(p.data(), p.data() + p.size(), dst);
  return out;
}

}  // namespace ssltsc
