#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <type_traits>
#include <utility>
#include <vector>

#include "dmrs/errors.hpp"

namespace dmrs {

using Shape = std::vector<std::int64_t>;

inline std::int64_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::int64_t{1},
                         std::multiplies<>());
}

inline std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

/// Dense row-major array (last axis fastest). Activations are NCHW, conv
/// kernels OIHW. Every call to mutable_data() bumps a version counter, which
/// the autodiff tape uses to detect tensors mutated after recording.
template <typename T>
class Tensor {
  static_assert(std::is_arithmetic_v<T>);

 public:
  using value_type = T;

  Tensor() = default;

  explicit Tensor(Shape shape, T fill = T{0}) : shape_(std::move(shape)) {
    validate_shape();
    data_.assign(static_cast<std::size_t>(shape_numel(shape_)), fill);
  }

  Tensor(Shape shape, std::vector<T> data)
      : shape_(std::move(shape)), data_(std::move(data)) {
    validate_shape();
    if (static_cast<std::int64_t>(data_.size()) != shape_numel(shape_)) {
      throw ConfigError("tensor data length " + std::to_string(data_.size()) +
                        " does not match shape " + shape_str(shape_));
    }
  }

  Tensor(const Tensor& other) : shape_(other.shape_), data_(other.data_) {}
  Tensor(Tensor&& other) noexcept
      : shape_(std::move(other.shape_)), data_(std::move(other.data_)) {
    ++other.version_;
  }
  Tensor& operator=(const Tensor& other) {
    if (this != &other) {
      shape_ = other.shape_;
      data_ = other.data_;
      ++version_;
    }
    return *this;
  }
  Tensor& operator=(Tensor&& other) noexcept {
    if (this != &other) {
      shape_ = std::move(other.shape_);
      data_ = std::move(other.data_);
      ++version_;
      ++other.version_;
    }
    return *this;
  }

  static Tensor zeros_like(const Tensor& t) { return Tensor(t.shape()); }

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::int64_t dim(std::size_t axis) const { return shape_.at(axis); }
  std::int64_t numel() const { return static_cast<std::int64_t>(data_.size()); }
  bool empty() const { return shape_.empty(); }

  std::span<const T> data() const { return data_; }
  std::span<T> mutable_data() {
    ++version_;
    return data_;
  }
  std::uint64_t version() const { return version_; }

  T operator[](std::size_t i) const { return data_[i]; }

  /// Element of a rank-4 tensor.
  T at(std::int64_t n, std::int64_t c, std::int64_t h, std::int64_t w) const {
    return data_[static_cast<std::size_t>(
        ((n * shape_[1] + c) * shape_[2] + h) * shape_[3] + w)];
  }

  template <typename U>
  Tensor<U> cast() const {
    std::vector<U> out(data_.size());
    std::transform(data_.begin(), data_.end(), out.begin(),
                   [](T v) { return static_cast<U>(v); });
    return Tensor<U>(shape_, std::move(out));
  }

  Tensor reshaped(Shape shape) const {
    if (shape_numel(shape) != numel()) {
      throw ConfigError("cannot reshape " + shape_str(shape_) + " to " +
                        shape_str(shape));
    }
    return Tensor(std::move(shape), data_);
  }

  bool all_finite() const {
    if constexpr (std::is_floating_point_v<T>) {
      return std::all_of(data_.begin(), data_.end(),
                         [](T v) { return std::isfinite(v); });
    } else {
      return true;
    }
  }

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.shape_ == b.shape_ && a.data_ == b.data_;
  }

 private:
  void validate_shape() const {
    for (auto e : shape_) {
      if (e < 0) throw ConfigError("negative extent in shape " + shape_str(shape_));
    }
  }

  Shape shape_;
  std::vector<T> data_;
  std::uint64_t version_ = 0;
};

using TensorF = Tensor<float>;
using TensorD = Tensor<double>;
using LabelMap = Tensor<std::int32_t>;

/// Throws ConfigError unless `t` has rank 4.
template <typename T>
void require_rank4(const Tensor<T>& t, const char* what) {
  if (t.rank() != 4) {
    throw ConfigError(std::string(what) + " must be rank 4 (NCHW), got " +
                      shape_str(t.shape()));
  }
}

}  // namespace dmrs
