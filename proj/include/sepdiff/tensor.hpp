#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <new>
#include <span>
#include <string>
#include <vector>

namespace sepdiff {

/// (batch, channels, time). Weights reuse the same triple, e.g. a conv
/// kernel is (out_channels, in_channels, width).
struct Shape {
  std::size_t batch = 0;
  std::size_t channels = 0;
  std::size_t length = 0;

  std::size_t size() const noexcept { return batch * channels * length; }
  bool operator==(const Shape&) const = default;
  std::string str() const {
    return "(" + std::to_string(batch) + ", " + std::to_string(channels) +
           ", " + std::to_string(length) + ")";
  }
};

/// Fixed 64-byte alignment keeps vectorized reductions independent of
/// where the allocator happens to place a buffer.
template <class T>
struct AlignedAllocator {
  using value_type = T;
  static constexpr std::align_val_t alignment{64};

  AlignedAllocator() noexcept = default;
  template <class U>
  AlignedAllocator(const AlignedAllocator<U>&) noexcept {}

  T* allocate(std::size_t n) {
    return static_cast<T*>(::operator new(n * sizeof(T), alignment));
  }
  void deallocate(T* p, std::size_t) noexcept { ::operator delete(p, alignment); }

  template <class U>
  bool operator==(const AlignedAllocator<U>&) const noexcept { return true; }
};

/// Dense row-major tensor; time is the fastest-varying axis.
template <class T>
class BasicTensor {
 public:
  using value_type = T;

  BasicTensor() = default;
  explicit BasicTensor(Shape shape, T fill = T(0))
      : shape_(shape), data_(shape.size(), fill) {}
  BasicTensor(Shape shape, const std::vector<T>& data)
      : shape_(shape), data_(data.begin(), data.end()) {}

  const Shape& shape() const noexcept { return shape_; }
  std::size_t batch() const noexcept { return shape_.batch; }
  std::size_t channels() const noexcept { return shape_.channels; }
  std::size_t length() const noexcept { return shape_.length; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  T* data() noexcept { return data_.data(); }
  const T* data() const noexcept { return data_.data(); }
  std::span<T> values() noexcept { return data_; }
  std::span<const T> values() const noexcept { return data_; }

  T& operator()(std::size_t b, std::size_t c, std::size_t t) {
    return data_[(b * shape_.channels + c) * shape_.length + t];
  }
  T operator()(std::size_t b, std::size_t c, std::size_t t) const {
    return data_[(b * shape_.channels + c) * shape_.length + t];
  }

  T* row(std::size_t b, std::size_t c) {
    return data_.data() + (b * shape_.channels + c) * shape_.length;
  }
  const T* row(std::size_t b, std::size_t c) const {
    return data_.data() + (b * shape_.channels + c) * shape_.length;
  }
  /// Start of batch item b, a (channels x length) block.
  T* item(std::size_t b) { return data_.data() + b * shape_.channels * shape_.length; }
  const T* item(std::size_t b) const {
    return data_.data() + b * shape_.channels * shape_.length;
  }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

  bool all_finite() const {
    return std::all_of(data_.begin(), data_.end(),
                       [](T v) { return std::isfinite(v); });
  }

  template <class U>
  BasicTensor<U> cast() const {
    BasicTensor<U> out(shape_);
    std::copy(data_.begin(), data_.end(), out.data());
    return out;
  }

  bool operator==(const BasicTensor&) const = default;

 private:
  Shape shape_{};
  std::vector<T, AlignedAllocator<T>> data_;
};

using Tensor = BasicTensor<float>;

}  // namespace sepdiff
