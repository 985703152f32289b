#include <algorithm>
#include <vector>

#include "sase/flop_counter.hpp"
#include "sase/kernels.hpp"
#include "sase/nn.hpp"
#include "sase/ops.hpp"

namespace sase {

using detail::BackwardFn;
using detail::make_result;
using detail::needs_grad;
using Grads = std::vector<std::vector<double>>;
using kernels::Trans;

// ---------------------------------------------------------------- specs

Conv2dSpec Conv2dSpec::same(std::int64_t in, std::int64_t out, std::int64_t k,
                            std::int64_t dilation, std::int64_t stride) {
  Conv2dSpec s;
  s.in_channels = in;
  s.out_channels = out;
  s.kernel = {k, k};
  s.stride = {stride, stride};
  s.dilation = {dilation, dilation};
  s.padding = {dilation * (k - 1) / 2, dilation * (k - 1) / 2};
  return s;
}

Shape Conv2dSpec::weight_shape() const {
  return Shape{out_channels, in_channels / groups, kernel.first, kernel.second};
}

void Conv2dSpec::validate() const {
  if (in_channels < 1 || out_channels < 1 || groups < 1) {
    throw ShapeError("conv2d: channel counts and groups must be positive");
  }
  if (in_channels % groups != 0 || out_channels % groups != 0) {
    throw ShapeError("conv2d: channels (" + std::to_string(in_channels) + ", " +
                     std::to_string(out_channels) + ") not divisible by groups " +
                     std::to_string(groups));
  }
  if (kernel.first < 1 || kernel.second < 1 || stride.first < 1 || stride.second < 1 ||
      dilation.first < 1 || dilation.second < 1 || padding.first < 0 || padding.second < 0) {
    throw ShapeError("conv2d: invalid kernel/stride/dilation/padding");
  }
}

std::pair<std::int64_t, std::int64_t> Conv2dSpec::output_extent(std::int64_t h,
                                                                std::int64_t w) const {
  const std::int64_t nh = h + 2 * padding.first - dilation.first * (kernel.first - 1) - 1;
  const std::int64_t nw = w + 2 * padding.second - dilation.second * (kernel.second - 1) - 1;
  if (nh < 0 || nw < 0) {
    throw ShapeError("conv2d: input " + std::to_string(h) + "x" + std::to_string(w) +
                     " too small for the kernel");
  }
  return {nh / stride.first + 1, nw / stride.second + 1};
}

Shape ConvTranspose2dSpec::weight_shape() const {
  return Shape{in_channels, out_channels / groups, kernel.first, kernel.second};
}

void ConvTranspose2dSpec::validate() const {
  if (in_channels < 1 || out_channels < 1 || groups < 1 || in_channels % groups != 0 ||
      out_channels % groups != 0) {
    throw ShapeError("conv_transpose2d: channels not divisible by groups");
  }
  if (kernel.first < 1 || kernel.second < 1 || stride.first < 1 || stride.second < 1 ||
      padding.first < 0 || padding.second < 0) {
    throw ShapeError("conv_transpose2d: invalid kernel/stride/padding");
  }
}

std::pair<std::int64_t, std::int64_t> ConvTranspose2dSpec::output_extent(std::int64_t h,
                                                                         std::int64_t w) const {
  const std::int64_t oh = (h - 1) * stride.first - 2 * padding.first + kernel.first;
  const std::int64_t ow = (w - 1) * stride.second - 2 * padding.second + kernel.second;
  if (oh < 1 || ow < 1) throw ShapeError("conv_transpose2d: non-positive output extent");
  return {oh, ow};
}

Tensor as_batch(const Tensor& x) {
  if (x.rank() == 4) return x;
  if (x.rank() == 3) return unsqueeze(x, 0);
  throw ShapeError("expected a [C,H,W] or [N,C,H,W] tensor, got " + x.shape().to_string());
}

namespace {

void check_nchw(const Tensor& x, const char* op) {
  if (x.rank() != 4) {
    throw ShapeError(std::string(op) + ": expected [N,C,H,W], got " + x.shape().to_string());
  }
}

kernels::WindowGeometry conv_geometry(const Conv2dSpec& s, std::int64_t h, std::int64_t w) {
  kernels::WindowGeometry g;
  g.channels = s.in_channels / s.groups;
  g.height = h;
  g.width = w;
  g.kernel_h = s.kernel.first;
  g.kernel_w = s.kernel.second;
  g.stride_h = s.stride.first;
  g.stride_w = s.stride.second;
  g.pad_h = s.padding.first;
  g.pad_w = s.padding.second;
  g.dilation_h = s.dilation.first;
  g.dilation_w = s.dilation.second;
  g.circular = s.padding_mode == PaddingMode::circular;
  return g;
}

bool is_pointwise(const kernels::WindowGeometry& g) {
  return g.kernel_h == 1 && g.kernel_w == 1 && g.stride_h == 1 && g.stride_w == 1 &&
         g.pad_h == 0 && g.pad_w == 0;
}

void check_conv_operands(const Tensor& x, const Tensor& weight, const Tensor& bias,
                         const Conv2dSpec& spec) {
  spec.validate();
  check_nchw(x, "conv2d");
  if (x.shape()[1] != spec.in_channels) {
    throw ShapeError("conv2d: input has " + std::to_string(x.shape()[1]) + " channels, spec " +
                     std::to_string(spec.in_channels));
  }
  if (weight.shape() != spec.weight_shape()) {
    throw ShapeError("conv2d: weight " + weight.shape().to_string() + ", expected " +
                     spec.weight_shape().to_string());
  }
  if (bias.defined() && bias.shape() != Shape{spec.out_channels}) {
    throw ShapeError("conv2d: bias shape " + bias.shape().to_string());
  }
}

}  // namespace

// ---------------------------------------------------------------- conv2d

Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias, const Conv2dSpec& spec) {
  check_conv_operands(x, weight, bias, spec);
  const DType dt = detail::result_dtype(x, weight);
  const std::int64_t n = x.shape()[0], h = x.shape()[2], w = x.shape()[3];
  const auto [oh, ow] = spec.output_extent(h, w);
  const auto geo = conv_geometry(spec, h, w);
  const std::int64_t groups = spec.groups;
  const std::int64_t cin_g = spec.in_channels / groups;
  const std::int64_t cout_g = spec.out_channels / groups;
  const std::int64_t patch = geo.patch_size();
  const std::int64_t hw = h * w, ohw = oh * ow;
  const std::int64_t chunk = kernels::column_chunk(patch);
  const bool pointwise = is_pointwise(geo);

  const double* px = x.data().data();
  const double* pw = weight.data().data();
  std::vector<double> out(static_cast<std::size_t>(n * spec.out_channels * ohw));
  std::vector<double> cols;
  for (std::int64_t b = 0; b < n; ++b) {
    for (std::int64_t g = 0; g < groups; ++g) {
      const double* img = px + (b * spec.in_channels + g * cin_g) * hw;
      const double* wg = pw + g * cout_g * patch;
      double* dst = out.data() + (b * spec.out_channels + g * cout_g) * ohw;
      if (pointwise) {
        kernels::gemm(Trans::no, Trans::no, cout_g, ohw, patch, wg, patch, img, hw, 0.0, dst, ohw);
        continue;
      }
      for (std::int64_t c0 = 0; c0 < ohw; c0 += chunk) {
        const std::int64_t c1 = std::min(ohw, c0 + chunk);
        cols.resize(static_cast<std::size_t>(patch * (c1 - c0)));
        kernels::im2col(geo, img, c0, c1, cols.data());
        kernels::gemm(Trans::no, Trans::no, cout_g, c1 - c0, patch, wg, patch, cols.data(),
                      c1 - c0, 0.0, dst + c0, ohw);
      }
    }
  }
  flops::add(static_cast<std::uint64_t>(n * spec.out_channels * ohw * patch));
  if (bias.defined()) {
    auto pb = bias.data();
    for (std::int64_t b = 0; b < n; ++b) {
      for (std::int64_t c = 0; c < spec.out_channels; ++c) {
        double* row = out.data() + (b * spec.out_channels + c) * ohw;
        for (std::int64_t i = 0; i < ohw; ++i) row[i] += pb[c];
      }
    }
    flops::add(static_cast<std::uint64_t>(n * spec.out_channels * ohw));
  }

  BackwardFn bw;
  if (needs_grad({&x, &weight, &bias})) {
    bw = [x, weight, bias, spec, geo, n, h, w, oh, ow](std::span<const double> gout) -> Grads {
      const std::int64_t groups = spec.groups;
      const std::int64_t cin_g = spec.in_channels / groups;
      const std::int64_t cout_g = spec.out_channels / groups;
      const std::int64_t patch = geo.patch_size();
      const std::int64_t hw = h * w, ohw = oh * ow;
      const std::int64_t chunk = kernels::column_chunk(patch);
      const bool pointwise = is_pointwise(geo);
      const bool need_x = x.requires_grad();
      const bool need_w = weight.requires_grad();
      const bool need_b = bias.defined() && bias.requires_grad();
      const double* px = x.data().data();
      const double* pw = weight.data().data();

      std::vector<double> gx, gw, gb;
      if (need_x) gx.assign(static_cast<std::size_t>(x.numel()), 0.0);
      if (need_w) gw.assign(static_cast<std::size_t>(weight.numel()), 0.0);
      std::vector<double> cols;
      for (std::int64_t b = 0; b < n; ++b) {
        for (std::int64_t g = 0; g < groups; ++g) {
          const double* img = px + (b * spec.in_channels + g * cin_g) * hw;
          const double* wg = pw + g * cout_g * patch;
          const double* go = gout.data() + (b * spec.out_channels + g * cout_g) * ohw;
          if (pointwise) {
            if (need_w) {
              kernels::gemm(Trans::no, Trans::yes, cout_g, patch, ohw, go, ohw, img, hw, 1.0,
                            gw.data() + g * cout_g * patch, patch);
            }
            if (need_x) {
              kernels::gemm(Trans::yes, Trans::no, patch, ohw, cout_g, wg, patch, go, ohw, 1.0,
                            gx.data() + (b * spec.in_channels + g * cin_g) * hw, hw);
            }
            continue;
          }
          for (std::int64_t c0 = 0; c0 < ohw; c0 += chunk) {
            const std::int64_t c1 = std::min(ohw, c0 + chunk);
            const std::int64_t nc = c1 - c0;
            cols.resize(static_cast<std::size_t>(patch * nc));
            if (need_w) {
              kernels::im2col(geo, img, c0, c1, cols.data());
              kernels::gemm(Trans::no, Trans::yes, cout_g, patch, nc, go + c0, ohw, cols.data(),
                            nc, 1.0, gw.data() + g * cout_g * patch, patch);
            }
            if (need_x) {
              kernels::gemm(Trans::yes, Trans::no, patch, nc, cout_g, wg, patch, go + c0, ohw,
                            0.0, cols.data(), nc);
              kernels::col2im(geo, cols.data(), c0, c1,
                              gx.data() + (b * spec.in_channels + g * cin_g) * hw);
            }
          }
        }
      }
      if (need_b) {
        gb.assign(static_cast<std::size_t>(spec.out_channels), 0.0);
        for (std::int64_t b = 0; b < n; ++b) {
          for (std::int64_t c = 0; c < spec.out_channels; ++c) {
            const double* row = gout.data() + (b * spec.out_channels + c) * ohw;
            double s = 0.0;
            for (std::int64_t i = 0; i < ohw; ++i) s += row[i];
            gb[c] += s;
          }
        }
      }
      return {std::move(gx), std::move(gw), std::move(gb)};
    };
  }
  std::vector<Tensor> inputs{x, weight};
  if (bias.defined()) inputs.push_back(bias);
  return make_result("conv2d", Shape{n, spec.out_channels, oh, ow}, dt, std::move(out),
                     std::move(inputs), std::move(bw));
}

Tensor conv2d_naive_oracle(const Tensor& x, const Tensor& weight, const Tensor& bias,
                           const Conv2dSpec& spec) {
  check_conv_operands(x, weight, bias, spec);
  const std::int64_t n = x.shape()[0], h = x.shape()[2], w = x.shape()[3];
  const auto [oh, ow] = spec.output_extent(h, w);
  const std::int64_t cin_g = spec.in_channels / spec.groups;
  const std::int64_t cout_g = spec.out_channels / spec.groups;
  const auto [kh, kw] = spec.kernel;
  const bool circular = spec.padding_mode == PaddingMode::circular;
  auto px = x.data();
  auto pw = weight.data();
  std::vector<double> out(static_cast<std::size_t>(n * spec.out_channels * oh * ow));
  for (std::int64_t b = 0; b < n; ++b) {
    for (std::int64_t co = 0; co < spec.out_channels; ++co) {
      const std::int64_t g = co / cout_g;
      for (std::int64_t oy = 0; oy < oh; ++oy) {
        for (std::int64_t ox = 0; ox < ow; ++ox) {
          double acc = bias.defined() ? bias.data()[co] : 0.0;
          for (std::int64_t ci = 0; ci < cin_g; ++ci) {
            for (std::int64_t ky = 0; ky < kh; ++ky) {
              for (std::int64_t kx = 0; kx < kw; ++kx) {
                std::int64_t iy = oy * spec.stride.first - spec.padding.first + ky * spec.dilation.first;
                std::int64_t ix = ox * spec.stride.second - spec.padding.second + kx * spec.dilation.second;
                if (circular) {
                  iy = ((iy % h) + h) % h;
                  ix = ((ix % w) + w) % w;
                } else if (iy < 0 || iy >= h || ix < 0 || ix >= w) {
                  continue;
                }
                const double xv = px[((b * spec.in_channels + g * cin_g + ci) * h + iy) * w + ix];
                const double wv = pw[((co * cin_g + ci) * kh + ky) * kw + kx];
                acc += xv * wv;
              }
            }
          }
          out[((b * spec.out_channels + co) * oh + oy) * ow + ox] = acc;
        }
      }
    }
  }
  return Tensor::from_values(Shape{n, spec.out_channels, oh, ow}, std::move(out), x.dtype());
}

// ---------------------------------------------------------------- transpose

Tensor conv_transpose2d(const Tensor& x, const Tensor& weight, const Tensor& bias,
                        const ConvTranspose2dSpec& spec) {
  spec.validate();
  check_nchw(x, "conv_transpose2d");
  if (x.shape()[1] != spec.in_channels) throw ShapeError("conv_transpose2d: channel mismatch");
  if (weight.shape() != spec.weight_shape()) {
    throw ShapeError("conv_transpose2d: weight " + weight.shape().to_string() + ", expected " +
                     spec.weight_shape().to_string());
  }
  if (bias.defined() && bias.shape() != Shape{spec.out_channels}) {
    throw ShapeError("conv_transpose2d: bias shape mismatch");
  }
  const DType dt = detail::result_dtype(x, weight);
  const std::int64_t n = x.shape()[0], h = x.shape()[2], w = x.shape()[3];
  const auto [oh, ow] = spec.output_extent(h, w);
  const std::int64_t groups = spec.groups;
  const std::int64_t cin_g = spec.in_channels / groups;
  const std::int64_t cout_g = spec.out_channels / groups;

  // Geometry of the equivalent forward convolution from output to input.
  kernels::WindowGeometry geo;
  geo.channels = cout_g;
  geo.height = oh;
  geo.width = ow;
  geo.kernel_h = spec.kernel.first;
  geo.kernel_w = spec.kernel.second;
  geo.stride_h = spec.stride.first;
  geo.stride_w = spec.stride.second;
  geo.pad_h = spec.padding.first;
  geo.pad_w = spec.padding.second;
  if (geo.out_height() != h || geo.out_width() != w) {
    throw ShapeError("conv_transpose2d: inconsistent extents");
  }
  const std::int64_t patch = geo.patch_size();
  const std::int64_t hw = h * w, ohw = oh * ow;
  const std::int64_t chunk = kernels::column_chunk(patch);

  const double* px = x.data().data();
  const double* pw = weight.data().data();
  std::vector<double> out(static_cast<std::size_t>(n * spec.out_channels * ohw), 0.0);
  std::vector<double> cols;
  for (std::int64_t b = 0; b < n; ++b) {
    for (std::int64_t g = 0; g < groups; ++g) {
      const double* xg = px + (b * spec.in_channels + g * cin_g) * hw;
      const double* wg = pw + g * cin_g * patch;
      double* img = out.data() + (b * spec.out_channels + g * cout_g) * ohw;
      for (std::int64_t c0 = 0; c0 < hw; c0 += chunk) {
        const std::int64_t c1 = std::min(hw, c0 + chunk);
        cols.resize(static_cast<std::size_t>(patch * (c1 - c0)));
        kernels::gemm(Trans::yes, Trans::no, patch, c1 - c0, cin_g, wg, patch, xg + c0, hw, 0.0,
                      cols.data(), c1 - c0);
        kernels::col2im(geo, cols.data(), c0, c1, img);
      }
    }
  }
  flops::add(static_cast<std::uint64_t>(n * spec.in_channels * hw * patch));
  if (bias.defined()) {
    auto pb = bias.data();
    for (std::int64_t b = 0; b < n; ++b) {
      for (std::int64_t c = 0; c < spec.out_channels; ++c) {
        double* row = out.data() + (b * spec.out_channels + c) * ohw;
        for (std::int64_t i = 0; i < ohw; ++i) row[i] += pb[c];
      }
    }
    flops::add(static_cast<std::uint64_t>(n * spec.out_channels * ohw));
  }

  BackwardFn bw;
  if (needs_grad({&x, &weight, &bias})) {
    bw = [x, weight, bias, spec, geo, n, hw, ohw](std::span<const double> gout) -> Grads {
      const std::int64_t groups = spec.groups;
      const std::int64_t cin_g = spec.in_channels / groups;
      const std::int64_t cout_g = spec.out_channels / groups;
      const std::int64_t patch = geo.patch_size();
      const std::int64_t chunk = kernels::column_chunk(patch);
      const bool need_x = x.requires_grad();
      const bool need_w = weight.requires_grad();
      const bool need_b = bias.defined() && bias.requires_grad();
      const double* px = x.data().data();
      const double* pw = weight.data().data();
      std::vector<double> gx, gw, gb;
      if (need_x) gx.assign(static_cast<std::size_t>(x.numel()), 0.0);
      if (need_w) gw.assign(static_cast<std::size_t>(weight.numel()), 0.0);
      std::vector<double> cols;
      for (std::int64_t b = 0; b < n; ++b) {
        for (std::int64_t g = 0; g < groups; ++g) {
          const double* xg = px + (b * spec.in_channels + g * cin_g) * hw;
          const double* wg = pw + g * cin_g * patch;
          const double* go = gout.data() + (b * spec.out_channels + g * cout_g) * ohw;
          for (std::int64_t c0 = 0; c0 < hw; c0 += chunk) {
            const std::int64_t c1 = std::min(hw, c0 + chunk);
            const std::int64_t nc = c1 - c0;
            cols.resize(static_cast<std::size_t>(patch * nc));
            kernels::im2col(geo, go, c0, c1, cols.data());
            if (need_x) {
              kernels::gemm(Trans::no, Trans::no, cin_g, nc, patch, wg, patch, cols.data(), nc,
                            0.0, gx.data() + (b * spec.in_channels + g * cin_g) * hw + c0, hw);
            }
            if (need_w) {
              kernels::gemm(Trans::no, Trans::yes, cin_g, patch, nc, xg + c0, hw, cols.data(), nc,
                            1.0, gw.data() + g * cin_g * patch, patch);
            }
          }
        }
      }
      if (need_b) {
        gb.assign(static_cast<std::size_t>(spec.out_channels), 0.0);
        for (std::int64_t b = 0; b < n; ++b) {
          for (std::int64_t c = 0; c < spec.out_channels; ++c) {
            const double* row = gout.data() + (b * spec.out_channels + c) * ohw;
            double s = 0.0;
            for (std::int64_t i = 0; i < ohw; ++i) s += row[i];
            gb[c] += s;
          }
        }
      }
      return {std::move(gx), std::move(gw), std::move(gb)};
    };
  }
  std::vector<Tensor> inputs{x, weight};
  if (bias.defined()) inputs.push_back(bias);
  return make_result("conv_transpose2d", Shape{n, spec.out_channels, oh, ow}, dt, std::move(out),
                     std::move(inputs), std::move(bw));
}

// ---------------------------------------------------------------- linear

Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  if (x.rank() != 2 || weight.rank() != 2 || x.shape()[1] != weight.shape()[1]) {
    throw ShapeError("linear: x " + x.shape().to_string() + " incompatible with weight " +
                     weight.shape().to_string());
  }
  const std::int64_t b = x.shape()[0], in = x.shape()[1], out_f = weight.shape()[0];
  if (bias.defined() && bias.shape() != Shape{out_f}) throw ShapeError("linear: bias shape");
  const DType dt = detail::result_dtype(x, weight);
  std::vector<double> out(static_cast<std::size_t>(b * out_f));
  kernels::gemm(Trans::no, Trans::yes, b, out_f, in, x.data().data(), in, weight.data().data(),
                in, 0.0, out.data(), out_f);
  flops::add(static_cast<std::uint64_t>(b * in * out_f));
  if (bias.defined()) {
    auto pb = bias.data();
    for (std::int64_t i = 0; i < b; ++i) {
      for (std::int64_t j = 0; j < out_f; ++j) out[i * out_f + j] += pb[j];
    }
    flops::add(static_cast<std::uint64_t>(b * out_f));
  }
  BackwardFn bw;
  if (needs_grad({&x, &weight, &bias})) {
    bw = [x, weight, bias, b, in, out_f](std::span<const double> g) -> Grads {
      std::vector<double> gx, gw, gb;
      if (x.requires_grad()) {
        gx.assign(static_cast<std::size_t>(b * in), 0.0);
        kernels::gemm(Trans::no, Trans::no, b, in, out_f, g.data(), out_f, weight.data().data(),
                      in, 0.0, gx.data(), in);
      }
      if (weight.requires_grad()) {
        gw.assign(static_cast<std::size_t>(out_f * in), 0.0);
        kernels::gemm(Trans::yes, Trans::no, out_f, in, b, g.data(), out_f, x.data().data(), in,
                      0.0, gw.data(), in);
      }
      if (bias.defined() && bias.requires_grad()) {
        gb.assign(static_cast<std::size_t>(out_f), 0.0);
        for (std::int64_t i = 0; i < b; ++i) {
          for (std::int64_t j = 0; j < out_f; ++j) gb[j] += g[i * out_f + j];
        }
      }
      return {std::move(gx), std::move(gw), std::move(gb)};
    };
  }
  std::vector<Tensor> inputs{x, weight};
  if (bias.defined()) inputs.push_back(bias);
  return make_result("linear", Shape{b, out_f}, dt, std::move(out), std::move(inputs),
                     std::move(bw));
}

}  // namespace sase
