// Copyright (c) 2026 FixRes Lab Contributors
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

#ifndef FIXRES_DETAIL_MATMUL_HPP_
#define FIXRES_DETAIL_MATMUL_HPP_

#include <algorithm>
#include <cstdint>

namespace fixres::detail {

/**
 * C (M x N) = A (M x K) * B (K x N), row-major, C += when accumulate.
 * The inner loop is an axpy over contiguous row chunks, which vectorizes
 * under strict IEEE semantics; callers pre-transpose operands instead of
 * asking for NT/TN variants. Columns are tiled so the active C and B chunks
 * stay cache-resident, and rows go four at a time so each B chunk is read
 * once per four output rows. Every C element still accumulates over p in
 * ascending order, so results are independent of the blocking.
 */
template <typename T>
void matmul_nn(int64_t m, int64_t n, int64_t k, const T* a, const T* b, T* c,
               bool accumulate) {
  if (!accumulate) std::fill(c, c + m * n, T(0));
  constexpr int64_t kColTile = 1024;
  for (int64_t j0 = 0; j0 < n; j0 += kColTile) {
    const int64_t jn = std::min(kColTile, n - j0);
    int64_t i = 0;
    for (; i + 4 <= m; i += 4) {
      const T* a0 = a + (i + 0) * k;
      const T* a1 = a + (i + 1) * k;
      const T* a2 = a + (i + 2) * k;
      const T* a3 = a + (i + 3) * k;
      T* c0 = c + (i + 0) * n + j0;
      T* c1 = c + (i + 1) * n + j0;
      T* c2 = c + (i + 2) * n + j0;
      T* c3 = c + (i + 3) * n + j0;
      for (int64_t p = 0; p < k; ++p) {
        const T av0 = a0[p], av1 = a1[p], av2 = a2[p], av3 = a3[p];
        const T* brow = b + p * n + j0;
        for (int64_t j = 0; j < jn; ++j) {
          c0[j] += av0 * brow[j];
          c1[j] += av1 * brow[j];
          c2[j] += av2 * brow[j];
          c3[j] += av3 * brow[j];
        }
      }
    }
    for (; i < m; ++i) {
      const T* arow = a + i * k;
      T* crow = c + i * n + j0;
      for (int64_t p = 0; p < k; ++p) {
        const T av = arow[p];
        const T* brow = b + p * n + j0;
        for (int64_t j = 0; j < jn; ++j) crow[j] += av * brow[j];
      }
    }
  }
}

/** dst (cols x rows) = transpose of src (rows x cols). */
template <typename T>
void transpose(int64_t rows, int64_t cols, const T* src, T* dst) {
  for (int64_t i = 0; i < rows; ++i) {
    const T* srow = src + i * cols;
    for (int64_t j = 0; j < cols; ++j) dst[j * rows + i] = srow[j];
  }
}

/**
 * Unfold one C x H x W image into a (C*k*k) x (out_h*out_w) patch matrix.
 * Out-of-bounds taps (padding) become zeros. Patch rows land dst_stride
 * apart, so several images can share one wide matrix side by side.
 */
template <typename T>
void im2col(const T* x, int64_t c, int64_t h, int64_t w, int64_t k,
            int64_t stride, int64_t pad, int64_t out_h, int64_t out_w, T* col,
            int64_t dst_stride) {
  for (int64_t ch = 0; ch < c; ++ch) {
    for (int64_t ky = 0; ky < k; ++ky) {
      for (int64_t kx = 0; kx < k; ++kx) {
        T* dst = col + ((ch * k + ky) * k + kx) * dst_stride;
        for (int64_t oy = 0; oy < out_h; ++oy) {
          const int64_t iy = oy * stride - pad + ky;
          T* drow = dst + oy * out_w;
          if (iy < 0 || iy >= h) {
            std::fill(drow, drow + out_w, T(0));
            continue;
          }
          const T* srow = x + (ch * h + iy) * w;
          for (int64_t ox = 0; ox < out_w; ++ox) {
            const int64_t ix = ox * stride - pad + kx;
            drow[ox] = (ix >= 0 && ix < w) ? srow[ix] : T(0);
          }
        }
      }
    }
  }
}

/** Scatter-add a patch-matrix gradient back onto the C x H x W image. */
template <typename T>
void col2im_add(const T* col, int64_t c, int64_t h, int64_t w, int64_t k,
                int64_t stride, int64_t pad, int64_t out_h, int64_t out_w, T* x) {
  for (int64_t ch = 0; ch < c; ++ch) {
    for (int64_t ky = 0; ky < k; ++ky) {
      for (int64_t kx = 0; kx < k; ++kx) {
        const T* src = col + ((ch * k + ky) * k + kx) * (out_h * out_w);
        for (int64_t oy = 0; oy < out_h; ++oy) {
          const int64_t iy = oy * stride - pad + ky;
          if (iy < 0 || iy >= h) continue;
          const T* srow = src + oy * out_w;
          T* drow = x + (ch * h + iy) * w;
          for (int64_t ox = 0; ox < out_w; ++ox) {
            const int64_t ix = ox * stride - pad + kx;
            if (ix >= 0 && ix < w) drow[ix] += srow[ox];
          }
        }
      }
    }
  }
}

}  // namespace fixres::detail

#endif  // FIXRES_DETAIL_MATMUL_HPP_
