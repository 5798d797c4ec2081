// Copyright 2026 The dilfcn Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "dilfcn/error.hpp"

namespace dilfcn {

/// Extents of a dense (batch, channel, height, width) array.
struct Shape4 {
  std::size_t n = 1;
  std::size_t c = 1;
  std::size_t h = 1;
  std::size_t w = 1;

  /// Throws ShapeError if any extent is zero or the element count overflows.
  void validate() const;
  std::size_t numel() const noexcept { return n * c * h * w; }
  std::string str() const;

  friend bool operator==(const Shape4&, const Shape4&) = default;
};

/// Dense 4-D tensor, row-major in (n, c, h, w). T is float (storage
/// precision) or double (reference / gradient-check precision).
template <typename T>
class BasicTensor {
 public:
  using value_type = T;

  BasicTensor() : data_(1, T(0)) {}
  explicit BasicTensor(const Shape4& shape, T fill = T(0));
  BasicTensor(const Shape4& shape, std::vector<T> values);

  const Shape4& shape() const noexcept { return shape_; }
  std::size_t size() const noexcept { return data_.size(); }

  std::span<T> data() noexcept { return data_; }
  std::span<const T> data() const noexcept { return data_; }
  T* ptr() noexcept { return data_.data(); }
  const T* ptr() const noexcept { return data_.data(); }

  T& operator[](std::size_t i) noexcept { return data_[i]; }
  const T& operator[](std::size_t i) const noexcept { return data_[i]; }

  std::size_t index(std::size_t n, std::size_t c, std::size_t y,
                    std::size_t x) const noexcept {
    return ((n * shape_.c + c) * shape_.h + y) * shape_.w + x;
  }
  T& at(std::size_t n, std::size_t c, std::size_t y, std::size_t x) noexcept {
    return data_[index(n, c, y, x)];
  }
  const T& at(std::size_t n, std::size_t c, std::size_t y,
              std::size_t x) const noexcept {
    return data_[index(n, c, y, x)];
  }

  /// Pointer to the (h, w) plane of image n, channel c.
  T* plane(std::size_t n, std::size_t c) noexcept {
    return data_.data() + (n * shape_.c + c) * shape_.h * shape_.w;
  }
  const T* plane(std::size_t n, std::size_t c) const noexcept {
    return data_.data() + (n * shape_.c + c) * shape_.h * shape_.w;
  }

  void fill(T value);

  template <typename U>
  BasicTensor<U> cast() const {
    std::vector<U> out(data_.begin(), data_.end());
    return BasicTensor<U>(shape_, std::move(out));
  }

 private:
  Shape4 shape_;
  std::vector<T> data_;
};

using Tensor = BasicTensor<float>;
using Tensor64 = BasicTensor<double>;

template <typename T>
BasicTensor<T> new_tensor(const Shape4& shape, T fill) {
  return BasicTensor<T>(shape, fill);
}

/// out[i] = a[i] + b[i]. Throws ShapeError naming both shapes on mismatch.
template <typename T>
BasicTensor<T> elementwise_add(const BasicTensor<T>& a, const BasicTensor<T>& b);

template <typename T>
BasicTensor<T> scale(const BasicTensor<T>& a, T s);

/// Sum of products accumulated in double.
template <typename T>
double inner_product(const BasicTensor<T>& a, const BasicTensor<T>& b);

/// True iff shapes match and |a-b| <= tol * (1 + max(|a|,|b|)) everywhere.
template <typename T>
bool approx_equal(const BasicTensor<T>& a, const BasicTensor<T>& b, double tol);

template <typename T>
bool all_finite(const BasicTensor<T>& t) noexcept {
  for (T v : t.data()) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

/// Throws NumericError mentioning `what` if t holds NaN or Inf.
template <typename T>
void ensure_finite(const BasicTensor<T>& t, const std::string& what);

/// Throws ShapeError unless a == b.
void require_same_shape(const Shape4& a, const Shape4& b, const char* op);

}  // namespace dilfcn
