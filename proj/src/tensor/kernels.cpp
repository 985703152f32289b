#include "sase/kernels.hpp"

#include <algorithm>
#include <stdexcept>
#include <utility>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace sase::kernels {

namespace {

constexpr std::int64_t kMR = 6;
constexpr std::int64_t kNR = 16;
constexpr std::int64_t kMC = 96;
constexpr std::int64_t kKC = 256;
constexpr std::int64_t kNC = 2048;
constexpr std::int64_t kSmallProduct = 64 * 256 * 64;

inline double elem(const double* p, std::int64_t ld, bool trans, std::int64_t row,
                   std::int64_t col) {
  return trans ? p[col * ld + row] : p[row * ld + col];
}

// Packs an mc x kc block of op(A) into row panels of height kMR,
// k-major inside a panel. Short panels are zero padded.
void pack_a(const double* a, std::int64_t lda, bool trans, std::int64_t i0, std::int64_t mc,
            std::int64_t p0, std::int64_t kc, double* out) {
  for (std::int64_t ir = 0; ir < mc; ir += kMR) {
    const std::int64_t mr = std::min(kMR, mc - ir);
    for (std::int64_t p = 0; p < kc; ++p) {
      double* dst = out + (ir * kc) + p * kMR;
      std::int64_t r = 0;
      for (; r < mr; ++r) dst[r] = elem(a, lda, trans, i0 + ir + r, p0 + p);
      for (; r < kMR; ++r) dst[r] = 0.0;
    }
  }
}

// Packs a kc x nc block of op(B) into column panels of width kNR.
void pack_b(const double* b, std::int64_t ldb, bool trans, std::int64_t p0, std::int64_t kc,
            std::int64_t j0, std::int64_t nc, double* out) {
  const std::int64_t panels = (nc + kNR - 1) / kNR;
#pragma omp parallel for schedule(static)
  for (std::int64_t jp = 0; jp < panels; ++jp) {
    const std::int64_t jr = jp * kNR;
    const std::int64_t nr = std::min(kNR, nc - jr);
    for (std::int64_t p = 0; p < kc; ++p) {
      double* dst = out + jr * kc + p * kNR;
      if (!trans && nr == kNR) {
        const double* src = b + (p0 + p) * ldb + j0 + jr;
        for (std::int64_t c = 0; c < kNR; ++c) dst[c] = src[c];
        continue;
      }
      std::int64_t c = 0;
      for (; c < nr; ++c) dst[c] = elem(b, ldb, trans, p0 + p, j0 + jr + c);
      for (; c < kNR; ++c) dst[c] = 0.0;
    }
  }
}

void micro_kernel(std::int64_t kc, const double* __restrict ap, const double* __restrict bp,
                  double* __restrict c, std::int64_t ldc, std::int64_t mr, std::int64_t nr,
                  bool accumulate) {
  double acc[kMR][kNR] = {};
  for (std::int64_t p = 0; p < kc; ++p) {
    const double* a = ap + p * kMR;
    const double* b = bp + p * kNR;
#pragma GCC unroll 6
    for (std::int64_t r = 0; r < kMR; ++r) {
      const double av = a[r];
#pragma omp simd
      for (std::int64_t j = 0; j < kNR; ++j) acc[r][j] += av * b[j];
    }
  }
  if (mr == kMR && nr == kNR) {
    for (std::int64_t r = 0; r < kMR; ++r) {
      double* row = c + r * ldc;
      if (accumulate) {
        for (std::int64_t j = 0; j < kNR; ++j) row[j] += acc[r][j];
      } else {
        for (std::int64_t j = 0; j < kNR; ++j) row[j] = acc[r][j];
      }
    }
    return;
  }
  for (std::int64_t r = 0; r < mr; ++r) {
    double* row = c + r * ldc;
    for (std::int64_t j = 0; j < nr; ++j) row[j] = accumulate ? row[j] + acc[r][j] : acc[r][j];
  }
}

// Unpacked loops for products too thin to amortise packing.
void small_gemm(bool ta, bool tb, std::int64_t m, std::int64_t n, std::int64_t k,
                const double* a, std::int64_t lda, const double* b, std::int64_t ldb,
                double beta, double* c, std::int64_t ldc) {
  for (std::int64_t i = 0; i < m; ++i) {
    double* crow = c + i * ldc;
    if (beta == 0.0) std::fill(crow, crow + n, 0.0);
    if (!tb) {
      for (std::int64_t p = 0; p < k; ++p) {
        const double av = elem(a, lda, ta, i, p);
        const double* brow = b + p * ldb;
#pragma omp simd
        for (std::int64_t j = 0; j < n; ++j) crow[j] += av * brow[j];
      }
    } else {
      for (std::int64_t j = 0; j < n; ++j) {
        const double* bcol = b + j * ldb;
        double s = 0.0;
        if (ta) {
          for (std::int64_t p = 0; p < k; ++p) s += a[p * lda + i] * bcol[p];
        } else {
          const double* arow = a + i * lda;
#pragma omp simd reduction(+ : s)
          for (std::int64_t p = 0; p < k; ++p) s += arow[p] * bcol[p];
        }
        crow[j] += s;
      }
    }
  }
}

}  // namespace

void gemm(Trans trans_a, Trans trans_b, std::int64_t m, std::int64_t n, std::int64_t k,
          const double* a, std::int64_t lda, const double* b, std::int64_t ldb, double beta,
          double* c, std::int64_t ldc) {
  if (beta != 0.0 && beta != 1.0) throw std::invalid_argument("gemm: beta must be 0 or 1");
  if (m <= 0 || n <= 0) return;
  if (k <= 0) {
    if (beta == 0.0) {
      for (std::int64_t i = 0; i < m; ++i) std::fill(c + i * ldc, c + i * ldc + n, 0.0);
    }
    return;
  }
  const bool ta = trans_a == Trans::yes;
  const bool tb = trans_b == Trans::yes;
  if (m < kMR || m * n * k <= kSmallProduct) {
    small_gemm(ta, tb, m, n, k, a, lda, b, ldb, beta, c, ldc);
    return;
  }

  // Packing buffers are reused across calls; conv kernels issue many small
  // products and per-call allocation dominated their cost.
  thread_local std::vector<double> bpack;
  const auto bsize =
      static_cast<std::size_t>(std::min(kKC, k) * ((std::min(kNC, n) + kNR - 1) / kNR) * kNR);
  if (bpack.size() < bsize) bpack.resize(bsize);
  for (std::int64_t j0 = 0; j0 < n; j0 += kNC) {
    const std::int64_t nc = std::min(kNC, n - j0);
    for (std::int64_t p0 = 0; p0 < k; p0 += kKC) {
      const std::int64_t kc = std::min(kKC, k - p0);
      const bool accumulate = p0 > 0 || beta == 1.0;
      pack_b(b, ldb, tb, p0, kc, j0, nc, bpack.data());

      const std::int64_t mblocks = (m + kMC - 1) / kMC;
#pragma omp parallel
      {
        thread_local std::vector<double> apack;
        if (apack.size() < static_cast<std::size_t>(kMC * kKC)) {
          apack.resize(static_cast<std::size_t>(kMC * kKC));
        }
#pragma omp for schedule(static)
        for (std::int64_t ib = 0; ib < mblocks; ++ib) {
          const std::int64_t i0 = ib * kMC;
          const std::int64_t mc = std::min(kMC, m - i0);
          pack_a(a, lda, ta, i0, mc, p0, kc, apack.data());
          for (std::int64_t jr = 0; jr < nc; jr += kNR) {
            const std::int64_t nr = std::min(kNR, nc - jr);
            for (std::int64_t ir = 0; ir < mc; ir += kMR) {
              const std::int64_t mr = std::min(kMR, mc - ir);
              micro_kernel(kc, apack.data() + ir * kc, bpack.data() + jr * kc,
                           c + (i0 + ir) * ldc + j0 + jr, ldc, mr, nr, accumulate);
            }
          }
        }
      }
    }
  }
}

std::int64_t WindowGeometry::out_height() const {
  return (height + 2 * pad_h - dilation_h * (kernel_h - 1) - 1) / stride_h + 1;
}

std::int64_t WindowGeometry::out_width() const {
  return (width + 2 * pad_w - dilation_w * (kernel_w - 1) - 1) / stride_w + 1;
}

namespace {

// Maps a padded coordinate onto the image, or -1 for a zero pad.
inline std::int64_t source_index(std::int64_t pos, std::int64_t extent, bool circular) {
  if (pos >= 0 && pos < extent) return pos;
  if (!circular) return -1;
  pos %= extent;
  return pos < 0 ? pos + extent : pos;
}

// Output columns [lo, hi) whose input column ox * stride + base lies inside
// [0, extent).
inline std::pair<std::int64_t, std::int64_t> valid_range(std::int64_t base, std::int64_t stride,
                                                         std::int64_t extent, std::int64_t n) {
  std::int64_t lo = base >= 0 ? 0 : (-base + stride - 1) / stride;
  std::int64_t hi = extent - 1 - base < 0 ? 0 : (extent - 1 - base) / stride + 1;
  lo = std::min(lo, n);
  hi = std::clamp(hi, lo, n);
  return {lo, hi};
}

// Calls fn(dst_offset, oy, ox_begin, ox_end) for each output-row segment of
// the flat column range [col_begin, col_end).
template <typename Fn>
inline void for_each_row_segment(std::int64_t ow, std::int64_t col_begin, std::int64_t col_end,
                                 Fn&& fn) {
  std::int64_t col = col_begin;
  while (col < col_end) {
    const std::int64_t oy = col / ow;
    const std::int64_t ox0 = col % ow;
    const std::int64_t seg = std::min(col_end - col, ow - ox0);
    fn(col - col_begin, oy, ox0, ox0 + seg);
    col += seg;
  }
}

constexpr std::int64_t kParallelGrain = 1 << 15;

}  // namespace

void im2col(const WindowGeometry& g, const double* image, std::int64_t col_begin,
            std::int64_t col_end, double* cols) {
  const std::int64_t ow_n = g.out_width();
  const std::int64_t ncols = col_end - col_begin;
  const std::int64_t rows = g.patch_size();
#pragma omp parallel for schedule(static) if (rows * ncols > kParallelGrain)
  for (std::int64_t row = 0; row < rows; ++row) {
    const std::int64_t kx = row % g.kernel_w;
    const std::int64_t ky = (row / g.kernel_w) % g.kernel_h;
    const std::int64_t ch = row / (g.kernel_w * g.kernel_h);
    const double* plane = image + ch * g.height * g.width;
    double* dst = cols + row * ncols;
    const std::int64_t xbase = kx * g.dilation_w - g.pad_w;
    const auto [vlo, vhi] = valid_range(xbase, g.stride_w, g.width, ow_n);
    for_each_row_segment(ow_n, col_begin, col_end,
                         [&](std::int64_t off, std::int64_t oy, std::int64_t x0, std::int64_t x1) {
      double* d = dst + off - x0;
      const std::int64_t iy =
          source_index(oy * g.stride_h - g.pad_h + ky * g.dilation_h, g.height, g.circular);
      if (iy < 0) {
        std::fill(d + x0, d + x1, 0.0);
        return;
      }
      const double* src = plane + iy * g.width;
      if (g.circular) {
        for (std::int64_t ox = x0; ox < x1; ++ox) {
          d[ox] = src[source_index(ox * g.stride_w + xbase, g.width, true)];
        }
        return;
      }
      const std::int64_t a = std::clamp(vlo, x0, x1), b = std::clamp(vhi, a, x1);
      std::fill(d + x0, d + a, 0.0);
      if (g.stride_w == 1) {
        std::copy(src + a + xbase, src + b + xbase, d + a);
      } else {
        for (std::int64_t ox = a; ox < b; ++ox) d[ox] = src[ox * g.stride_w + xbase];
      }
      std::fill(d + b, d + x1, 0.0);
    });
  }
}

void col2im(const WindowGeometry& g, const double* cols, std::int64_t col_begin,
            std::int64_t col_end, double* image) {
  const std::int64_t ow_n = g.out_width();
  const std::int64_t ncols = col_end - col_begin;
  const std::int64_t khw = g.kernel_h * g.kernel_w;
  // Channels are independent; within a channel rows are summed in fixed order.
#pragma omp parallel for schedule(static) if (g.channels * khw * ncols > kParallelGrain)
  for (std::int64_t ch = 0; ch < g.channels; ++ch) {
    double* plane = image + ch * g.height * g.width;
    for (std::int64_t kk = 0; kk < khw; ++kk) {
      const std::int64_t ky = kk / g.kernel_w;
      const std::int64_t kx = kk % g.kernel_w;
      const double* src = cols + (ch * khw + kk) * ncols;
      const std::int64_t xbase = kx * g.dilation_w - g.pad_w;
      const auto [vlo, vhi] = valid_range(xbase, g.stride_w, g.width, ow_n);
      for_each_row_segment(ow_n, col_begin, col_end,
                           [&](std::int64_t off, std::int64_t oy, std::int64_t x0,
                               std::int64_t x1) {
        const double* s = src + off - x0;
        const std::int64_t iy =
            source_index(oy * g.stride_h - g.pad_h + ky * g.dilation_h, g.height, g.circular);
        if (iy < 0) return;
        double* row = plane + iy * g.width;
        if (g.circular) {
          for (std::int64_t ox = x0; ox < x1; ++ox) {
            row[source_index(ox * g.stride_w + xbase, g.width, true)] += s[ox];
          }
          return;
        }
        const std::int64_t a = std::clamp(vlo, x0, x1), b = std::clamp(vhi, a, x1);
        for (std::int64_t ox = a; ox < b; ++ox) row[ox * g.stride_w + xbase] += s[ox];
      });
    }
  }
}

std::int64_t column_chunk(std::int64_t patch_size) {
  // Keep each scratch block near 32 MB.
  constexpr std::int64_t kBudget = (32LL << 20) / static_cast<std::int64_t>(sizeof(double));
  return std::max<std::int64_t>(256, kBudget / std::max<std::int64_t>(1, patch_size));
}

}  // namespace sase::kernels

namespace sase::reference {

void gemm(bool trans_a, bool trans_b, std::int64_t m, std::int64_t n, std::int64_t k,
          const double* a, std::int64_t lda, const double* b, std::int64_t ldb, double beta,
          double* c, std::int64_t ldc) {
  for (std::int64_t i = 0; i < m; ++i) {
    for (std::int64_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (std::int64_t p = 0; p < k; ++p) {
        const double av = trans_a ? a[p * lda + i] : a[i * lda + p];
        const double bv = trans_b ? b[j * ldb + p] : b[p * ldb + j];
        s += av * bv;
      }
      c[i * ldc + j] = (beta == 0.0 ? 0.0 : beta * c[i * ldc + j]) + s;
    }
  }
}

}  // namespace sase::reference
