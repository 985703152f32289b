#pragma once

#include <cstdint>

// Dense compute kernels. The `kernels` namespace holds the blocked,
// OpenMP-parallel implementations used by every op; `reference` holds the
// plain serial loops they are tested and benchmarked against.
//
// Parallel loops only ever split independent output elements, so every
// output is accumulated in the same order regardless of thread count and
// results are bitwise identical for any OMP_NUM_THREADS.

namespace sase::kernels {

enum class Trans : bool { no = false, yes = true };

// C = beta * C + op(A) * op(B), with op(A) M x K and op(B) K x N, all
// row-major with the given leading dimensions. beta must be 0 or 1.
void gemm(Trans trans_a, Trans trans_b, std::int64_t m, std::int64_t n, std::int64_t k,
          const double* a, std::int64_t lda, const double* b, std::int64_t ldb, double beta,
          double* c, std::int64_t ldc);

// Geometry of one sliding-window pass over a single C x H x W image.
struct WindowGeometry {
  std::int64_t channels = 1;
  std::int64_t height = 1, width = 1;
  std::int64_t kernel_h = 1, kernel_w = 1;
  std::int64_t stride_h = 1, stride_w = 1;
  std::int64_t pad_h = 0, pad_w = 0;
  std::int64_t dilation_h = 1, dilation_w = 1;
  bool circular = false;

  std::int64_t out_height() const;
  std::int64_t out_width() const;
  std::int64_t patch_size() const { return channels * kernel_h * kernel_w; }
};

// Writes columns [col_begin, col_end) of the (patch_size x out_h*out_w)
// patch matrix into `cols` (row stride col_end - col_begin).
void im2col(const WindowGeometry& g, const double* image, std::int64_t col_begin,
            std::int64_t col_end, double* cols);

// Adjoint of im2col: scatter-adds the column block back into `image`.
void col2im(const WindowGeometry& g, const double* cols, std::int64_t col_begin,
            std::int64_t col_end, double* image);

// Number of output columns processed per im2col chunk; bounds scratch memory.
std::int64_t column_chunk(std::int64_t patch_size);

}  // namespace sase::kernels

namespace sase::reference {

// Triple loop, no blocking, no threads.
void gemm(bool trans_a, bool trans_b, std::int64_t m, std::int64_t n, std::int64_t k,
          const double* a, std::int64_t lda, const double* b, std::int64_t ldb, double beta,
          double* c, std::int64_t ldc);

}  // namespace sase::reference
