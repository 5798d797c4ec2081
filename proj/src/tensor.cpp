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

#include "dilfcn/tensor.hpp"

#include <algorithm>

namespace dilfcn {

void Shape4::validate() const {
  if (n == 0 || c == 0 || h == 0 || w == 0) {
    throw ShapeError("degenerate shape " + str() + ": every extent must be >= 1");
  }
  const std::size_t limit = std::numeric_limits<std::size_t>::max();
  std::size_t count = 1;
  for (std::size_t e : {n, c, h, w}) {
    if (count > limit / e) throw ShapeError("element count of " + str() + " overflows");
    count *= e;
  }
}

std::string Shape4::str() const {
  return "(" + std::to_string(n) + "," + std::to_string(c) + "," + std::to_string(h) +
         "," + std::to_string(w) + ")";
}

void require_same_shape(const Shape4& a, const Shape4& b, const char* op) {
  if (!(a == b)) {
    throw ShapeError(std::string(op) + ": shape mismatch " + a.str() + " vs " + b.str());
  }
}

template <typename T>
BasicTensor<T>::BasicTensor(const Shape4& shape, T fill) : shape_(shape) {
  shape_.validate();
  data_.assign(shape_.numel(), fill);
}

template <typename T>
BasicTensor<T>::BasicTensor(const Shape4& shape, std::vector<T> values)
    : shape_(shape), data_(std::move(values)) {
  shape_.validate();
  if (data_.size() != shape_.numel()) {
    throw ShapeError("tensor " + shape_.str() + " needs " + std::to_string(shape_.numel()) +
                     " values, got " + std::to_string(data_.size()));
  }
}

template <typename T>
void BasicTensor<T>::fill(T value) {
  std::fill(data_.begin(), data_.end(), value);
}

template <typename T>
BasicTensor<T> elementwise_add(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  require_same_shape(a.shape(), b.shape(), "elementwise_add");
  BasicTensor<T> out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] + b[i];
  return out;
}

template <typename T>
BasicTensor<T> scale(const BasicTensor<T>& a, T s) {
  BasicTensor<T> out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = s * a[i];
  return out;
}

template <typename T>
double inner_product(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  require_same_shape(a.shape(), b.shape(), "inner_product");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    acc += static_cast<double>(a[i]) * static_cast<double>(b[i]);
  }
  return acc;
}

template <typename T>
bool approx_equal(const BasicTensor<T>& a, const BasicTensor<T>& b, double tol) {
  if (!(a.shape() == b.shape())) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double x = a[i];
    const double y = b[i];
    if (!(std::abs(x - y) <= tol * (1.0 + std::max(std::abs(x), std::abs(y))))) {
      return false;
    }
  }
  return true;
}

template <typename T>
void ensure_finite(const BasicTensor<T>& t, const std::string& what) {
  if (!all_finite(t)) throw NumericError("non-finite value in " + what);
}

#define DILFCN_INSTANTIATE(T)                                                       \
  template class BasicTensor<T>;                                                    \
  template BasicTensor<T> elementwise_add(const BasicTensor<T>&, const BasicTensor<T>&); \
  template BasicTensor<T> scale(const BasicTensor<T>&, T);                          \
  template double inner_product(const BasicTensor<T>&, const BasicTensor<T>&);      \
  template bool approx_equal(const BasicTensor<T>&, const BasicTensor<T>&, double); \
  template void ensure_finite(const BasicTensor<T>&, const std::string&);

DILFCN_INSTANTIATE(float)
DILFCN_INSTANTIATE(double)

#undef DILFCN_INSTANTIATE

}  // namespace dilfcn
