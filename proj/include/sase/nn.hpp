#pragma once

#include <cstdint>
#include <utility>

#include "sase/tensor.hpp"

// Layer primitives over N x C x H x W tensors. Every op is differentiable
// except the `_naive_oracle` references, which exist for equivalence tests.

namespace sase {

enum class PaddingMode { zeros, circular };

struct Conv2dSpec {
  std::int64_t in_channels = 1;
  std::int64_t out_channels = 1;
  std::pair<std::int64_t, std::int64_t> kernel{3, 3};
  std::pair<std::int64_t, std::int64_t> stride{1, 1};
  std::pair<std::int64_t, std::int64_t> padding{0, 0};
  PaddingMode padding_mode = PaddingMode::zeros;
  std::pair<std::int64_t, std::int64_t> dilation{1, 1};
  std::int64_t groups = 1;
  bool bias = false;

  // Square-kernel convenience: padding chosen to preserve extent at stride 1.
  static Conv2dSpec same(std::int64_t in, std::int64_t out, std::int64_t k,
                         std::int64_t dilation = 1, std::int64_t stride = 1);

  Shape weight_shape() const;
  // Throws ShapeError on divisibility or extent violations.
  void validate() const;
  std::pair<std::int64_t, std::int64_t> output_extent(std::int64_t h, std::int64_t w) const;
};

// Cross-correlation (no kernel flip). `bias` may be undefined.
Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias, const Conv2dSpec& spec);

// Direct summation loops, single-threaded, forward only.
Tensor conv2d_naive_oracle(const Tensor& x, const Tensor& weight, const Tensor& bias,
                           const Conv2dSpec& spec);

struct ConvTranspose2dSpec {
  std::int64_t in_channels = 1;
  std::int64_t out_channels = 1;
  std::pair<std::int64_t, std::int64_t> kernel{4, 4};
  std::pair<std::int64_t, std::int64_t> stride{1, 1};
  std::pair<std::int64_t, std::int64_t> padding{0, 0};
  std::int64_t groups = 1;
  bool bias = false;

  // [in_channels, out_channels / groups, kh, kw]
  Shape weight_shape() const;
  void validate() const;
  // (H-1)*stride - 2*pad + kernel
  std::pair<std::int64_t, std::int64_t> output_extent(std::int64_t h, std::int64_t w) const;
};

// Adjoint of conv2d with the same weight tensor.
Tensor conv_transpose2d(const Tensor& x, const Tensor& weight, const Tensor& bias,
                        const ConvTranspose2dSpec& spec);

// [N,C,H,W] -> [N,C,1,1]
Tensor global_avg_pool(const Tensor& x);
// Floor partition: bin i covers rows floor(i*H/h) .. floor((i+1)*H/h).
Tensor adaptive_avg_pool(const Tensor& x, std::int64_t out_h, std::int64_t out_w);
// Unpadded square window.
Tensor avg_pool2d(const Tensor& x, std::int64_t kernel, std::int64_t stride);
Tensor max_pool2d(const Tensor& x, std::int64_t kernel, std::int64_t stride, std::int64_t padding);

// a * sigmoid(b) where (a, b) are the channel halves.
Tensor glu(const Tensor& x);

Tensor upsample_nearest(const Tensor& x, std::int64_t scale);
// Half-pixel centres (align_corners = false).
Tensor resize_bilinear(const Tensor& x, std::int64_t out_h, std::int64_t out_w);

enum class UpsampleMode { nearest, bilinear };
// Integer scale factor; nearest requires scale >= 2.
Tensor upsample(const Tensor& x, std::int64_t scale, UpsampleMode mode);

// x + stddev * N(0,1) drawn from a generator seeded with `seed`.
Tensor inject_noise(const Tensor& x, std::uint64_t seed, double stddev);

struct BatchNormState {
  Tensor gamma;         // [C] trainable
  Tensor beta;          // [C] trainable
  Tensor running_mean;  // [C] buffer
  Tensor running_var;   // [C] buffer
  double eps = 1e-5;
  double momentum = 0.1;
  bool training = true;

  static BatchNormState create(std::int64_t channels);
};

// Train mode normalises with batch statistics (biased variance) and updates
// the running statistics with unbiased variance; eval mode uses the running
// statistics.
Tensor batchnorm(const Tensor& x, BatchNormState& state);

// x [B,in], weight [out,in], bias [out] (may be undefined).
Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias);

// Promote [C,H,W] to [1,C,H,W]; rank-4 inputs pass through.
Tensor as_batch(const Tensor& x);

}  // namespace sase
