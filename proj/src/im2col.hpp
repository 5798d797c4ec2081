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

#include <cstddef>

namespace dilfcn::detail {

/// Window geometry shared by convolution and its adjoint. Extents are
/// per image; `ext_h/ext_w` are output extents.
struct Window {
  std::size_t channels, in_h, in_w;
  std::size_t kernel, stride, pad, dilation;
  std::size_t out_h, out_w;

  std::size_t col_rows() const noexcept { return channels * kernel * kernel; }
  std::size_t col_cols() const noexcept { return out_h * out_w; }
};

/// col[(c*K+i)*K+j][y*out_w+x] = in[c][y*S+i*d-P][x*S+j*d-P] (0 outside).
template <typename T>
void im2col(const T* in, const Window& g, T* col) {
  const long pad = static_cast<long>(g.pad);
  for (std::size_t c = 0; c < g.channels; ++c) {
    const T* plane = in + c * g.in_h * g.in_w;
    for (std::size_t i = 0; i < g.kernel; ++i) {
      for (std::size_t j = 0; j < g.kernel; ++j) {
        T* row = col + ((c * g.kernel + i) * g.kernel + j) * g.col_cols();
        const long off_y = static_cast<long>(i * g.dilation) - pad;
        const long off_x = static_cast<long>(j * g.dilation) - pad;
        for (std::size_t y = 0; y < g.out_h; ++y) {
          const long iy = static_cast<long>(y * g.stride) + off_y;
          T* dst = row + y * g.out_w;
          if (iy < 0 || iy >= static_cast<long>(g.in_h)) {
            for (std::size_t x = 0; x < g.out_w; ++x) dst[x] = T(0);
            continue;
          }
          const T* src = plane + static_cast<std::size_t>(iy) * g.in_w;
          for (std::size_t x = 0; x < g.out_w; ++x) {
            const long ix = static_cast<long>(x * g.stride) + off_x;
            dst[x] = (ix < 0 || ix >= static_cast<long>(g.in_w))
                         ? T(0)
                         : src[static_cast<std::size_t>(ix)];
          }
        }
      }
    }
  }
}

/// Adjoint of im2col: accumulates every column entry into `in` (which must
/// be zeroed by the caller).
template <typename T, typename D>
void col2im(const T* col, const Window& g, D* in) {
  const long pad = static_cast<long>(g.pad);
  for (std::size_t c = 0; c < g.channels; ++c) {
    D* plane = in + c * g.in_h * g.in_w;
    for (std::size_t i = 0; i < g.kernel; ++i) {
      for (std::size_t j = 0; j < g.kernel; ++j) {
        const T* row = col + ((c * g.kernel + i) * g.kernel + j) * g.col_cols();
        const long off_y = static_cast<long>(i * g.dilation) - pad;
        const long off_x = static_cast<long>(j * g.dilation) - pad;
        for (std::size_t y = 0; y < g.out_h; ++y) {
          const long iy = static_cast<long>(y * g.stride) + off_y;
          if (iy < 0 || iy >= static_cast<long>(g.in_h)) continue;
          const T* src = row + y * g.out_w;
          D* dst = plane + static_cast<std::size_t>(iy) * g.in_w;
          for (std::size_t x = 0; x < g.out_w; ++x) {
            const long ix = static_cast<long>(x * g.stride) + off_x;
            if (ix >= 0 && ix < static_cast<long>(g.in_w)) {
              dst[static_cast<std::size_t>(ix)] += src[x];
            }
          }
        }
      }
    }
  }
}

}  // namespace dilfcn::detail
