#ifndef COMPTLL_SRC_KERNELS_HPP_
#define COMPTLL_SRC_KERNELS_HPP_

// Dense kernels behind conv2d / conv_transpose2d. Single-threaded and
// deterministic: the summation order depends only on the shapes.

#include <algorithm>
#include <cstddef>
#include <vector>

namespace comptll::ad::kernels {

// Geometry of a cross-correlation from an H x W input to an OH x OW output.
struct ConvGeom {
  int channels = 0;  // input channels
  int h = 0, w = 0;
  int k = 0, stride = 1, pad = 0;
  int oh = 0, ow = 0;

  int col_rows() const { return channels * k * k; }
};

// C[M x N] += A[M x K] * B[K x N]. `A(i, p)` is a[i * a_rs + p * a_cs], which
// covers both A and A^T storage.
template <typename T>
void gemm_acc(int m, int n, int kdim, const T* a, std::ptrdiff_t a_rs,
              std::ptrdiff_t a_cs, const T* b, std::ptrdiff_t ldb, T* c,
              std::ptrdiff_t ldc) {
  constexpr int kColBlock = 512;
  for (int j0 = 0; j0 < n; j0 += kColBlock) {
    const int jn = std::min(kColBlock, n - j0);
    int i = 0;
    for (; i + 4 <= m; i += 4) {
      T* c0 = c + i * ldc + j0;
      T* c1 = c0 + ldc;
      T* c2 = c1 + ldc;
      T* c3 = c2 + ldc;
      for (int p = 0; p < kdim; ++p) {
        const T a0 = a[i * a_rs + p * a_cs];
        const T a1 = a[(i + 1) * a_rs + p * a_cs];
        const T a2 = a[(i + 2) * a_rs + p * a_cs];
        const T a3 = a[(i + 3) * a_rs + p * a_cs];
        const T* br = b + p * ldb + j0;
        for (int j = 0; j < jn; ++j) {
          const T bv = br[j];
          c0[j] += a0 * bv;
          c1[j] += a1 * bv;
          c2[j] += a2 * bv;
          c3[j] += a3 * bv;
        }
      }
    }
    for (; i < m; ++i) {
      T* c0 = c + i * ldc + j0;
      for (int p = 0; p < kdim; ++p) {
        const T a0 = a[i * a_rs + p * a_cs];
        const T* br = b + p * ldb + j0;
        for (int j = 0; j < jn; ++j) c0[j] += a0 * br[j];
      }
    }
  }
}

// Dot product with double accumulation in eight fixed lanes.
template <typename T>
double dot(const T* a, const T* b, int n) {
  double acc[8] = {0, 0, 0, 0, 0, 0, 0, 0};
  int i = 0;
  for (; i + 8 <= n; i += 8) {
    for (int l = 0; l < 8; ++l) {
      acc[l] += static_cast<double>(a[i + l]) * static_cast<double>(b[i + l]);
    }
  }
  double tail = 0.0;
  for (; i < n; ++i) tail += static_cast<double>(a[i]) * static_cast<double>(b[i]);
  return ((acc[0] + acc[1]) + (acc[2] + acc[3])) +
         ((acc[4] + acc[5]) + (acc[6] + acc[7])) + tail;
}

// C[M x N] += A[M x P] * B[N x P]^T (dot-product form), accumulated in double.
template <typename T>
void gemm_nt_acc(int m, int n, int p, const T* a, std::ptrdiff_t lda, const T* b,
                 std::ptrdiff_t ldb, double* c, std::ptrdiff_t ldc) {
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < n; ++j) {
      c[i * ldc + j] += dot(a + i * lda, b + j * ldb, p);
    }
  }
}

// Unfolds output rows [oy0, oy1) into col[col_rows x (oy1-oy0)*ow].
template <typename T>
void im2col_rows(const T* img, const ConvGeom& g, int oy0, int oy1, T* col) {
  const int rows = oy1 - oy0;
  const std::ptrdiff_t ld = static_cast<std::ptrdiff_t>(rows) * g.ow;
  for (int c = 0; c < g.channels; ++c) {
    const T* plane = img + static_cast<std::ptrdiff_t>(c) * g.h * g.w;
    for (int ki = 0; ki < g.k; ++ki) {
      for (int kj = 0; kj < g.k; ++kj) {
        T* dst = col + ((static_cast<std::ptrdiff_t>(c) * g.k + ki) * g.k + kj) * ld;
        for (int oy = oy0; oy < oy1; ++oy) {
          T* out = dst + static_cast<std::ptrdiff_t>(oy - oy0) * g.ow;
          const int iy = oy * g.stride - g.pad + ki;
          if (iy < 0 || iy >= g.h) {
            std::fill(out, out + g.ow, T(0));
            continue;
          }
          const T* src = plane + static_cast<std::ptrdiff_t>(iy) * g.w;
          if (g.stride == 1) {
            const int shift = kj - g.pad;  // ix = ox + shift
            const int lo = std::clamp(-shift, 0, g.ow);
            const int hi = std::clamp(g.w - shift, lo, g.ow);
            std::fill(out, out + lo, T(0));
            std::copy(src + lo + shift, src + hi + shift, out + lo);
            std::fill(out + hi, out + g.ow, T(0));
          } else {
            for (int ox = 0; ox < g.ow; ++ox) {
              const int ix = ox * g.stride - g.pad + kj;
              out[ox] = (ix >= 0 && ix < g.w) ? src[ix] : T(0);
            }
          }
        }
      }
    }
  }
}

// Adjoint of im2col_rows: scatters col back, accumulating into img.
template <typename T>
void col2im_rows(const T* col, const ConvGeom& g, int oy0, int oy1, T* img) {
  const int rows = oy1 - oy0;
  const std::ptrdiff_t ld = static_cast<std::ptrdiff_t>(rows) * g.ow;
  for (int c = 0; c < g.channels; ++c) {
    T* plane = img + static_cast<std::ptrdiff_t>(c) * g.h * g.w;
    for (int ki = 0; ki < g.k; ++ki) {
      for (int kj = 0; kj < g.k; ++kj) {
        const T* srcc = col + ((static_cast<std::ptrdiff_t>(c) * g.k + ki) * g.k + kj) * ld;
        for (int oy = oy0; oy < oy1; ++oy) {
          const T* in = srcc + static_cast<std::ptrdiff_t>(oy - oy0) * g.ow;
          const int iy = oy * g.stride - g.pad + ki;
          if (iy < 0 || iy >= g.h) continue;
          T* dst = plane + static_cast<std::ptrdiff_t>(iy) * g.w;
          if (g.stride == 1) {
            const int shift = kj - g.pad;
            const int lo = std::clamp(-shift, 0, g.ow);
            const int hi = std::clamp(g.w - shift, lo, g.ow);
            for (int ox = lo; ox < hi; ++ox) dst[ox + shift] += in[ox];
          } else {
            for (int ox = 0; ox < g.ow; ++ox) {
              const int ix = ox * g.stride - g.pad + kj;
              if (ix >= 0 && ix < g.w) dst[ix] += in[ox];
            }
          }
        }
      }
    }
  }
}

// Output rows per chunk so that a column buffer stays near `budget` elements.
inline int rows_per_chunk(const ConvGeom& g, std::size_t budget = 1u << 19) {
  const std::size_t per_row =
      static_cast<std::size_t>(g.col_rows()) * static_cast<std::size_t>(g.ow);
  const std::size_t r = per_row == 0 ? 1 : budget / per_row;
  return static_cast<int>(std::clamp<std::size_t>(r, 1, static_cast<std::size_t>(std::max(g.oh, 1))));
}

}  // namespace comptll::ad::kernels

#endif  // COMPTLL_SRC_KERNELS_HPP_
