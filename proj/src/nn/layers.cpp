#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <vector>

#include "sase/flop_counter.hpp"
#include "sase/nn.hpp"
#include "sase/ops.hpp"

namespace sase {

using detail::BackwardFn;
using detail::make_result;
using detail::needs_grad;
using Grads = std::vector<std::vector<double>>;

namespace {

struct Nchw {
  std::int64_t n, c, h, w;
};

Nchw dims_of(const Tensor& x, const char* op) {
  if (x.rank() != 4) {
    throw ShapeError(std::string(op) + ": expected [N,C,H,W], got " + x.shape().to_string());
  }
  const auto& s = x.shape();
  return {s[0], s[1], s[2], s[3]};
}

// A pooling / resampling op expressed as a sparse linear map per plane:
// out[o] = sum_k weight[o][k] * in[index[o][k]]. Shared by every spatial op
// below so forward and backward stay consistent.
struct PlaneMap {
  std::int64_t in_h, in_w, out_h, out_w;
  std::vector<std::int64_t> offsets;  // size out + 1
  std::vector<std::int64_t> index;
  std::vector<double> weight;
};

Tensor apply_plane_map(const char* name, const Tensor& x, PlaneMap map) {
  const auto d = dims_of(x, name);
  const std::int64_t planes = d.n * d.c;
  const std::int64_t in_sz = map.in_h * map.in_w;
  const std::int64_t out_sz = map.out_h * map.out_w;
  auto px = x.data();
  std::vector<double> out(static_cast<std::size_t>(planes * out_sz));
#pragma omp parallel for schedule(static)
  for (std::int64_t p = 0; p < planes; ++p) {
    const double* src = px.data() + p * in_sz;
    double* dst = out.data() + p * out_sz;
    for (std::int64_t o = 0; o < out_sz; ++o) {
      double acc = 0.0;
      for (std::int64_t k = map.offsets[o]; k < map.offsets[o + 1]; ++k) {
        acc += map.weight[k] * src[map.index[k]];
      }
      dst[o] = acc;
    }
  }
  flops::add(out.size());
  BackwardFn bw;
  if (needs_grad({&x})) {
    bw = [map, planes, in_sz, out_sz](std::span<const double> g) -> Grads {
      std::vector<double> gx(static_cast<std::size_t>(planes * in_sz), 0.0);
#pragma omp parallel for schedule(static)
      for (std::int64_t p = 0; p < planes; ++p) {
        const double* go = g.data() + p * out_sz;
        double* dst = gx.data() + p * in_sz;
        for (std::int64_t o = 0; o < out_sz; ++o) {
          for (std::int64_t k = map.offsets[o]; k < map.offsets[o + 1]; ++k) {
            dst[map.index[k]] += map.weight[k] * go[o];
          }
        }
      }
      return {std::move(gx)};
    };
  }
  return make_result(name, Shape{d.n, d.c, map.out_h, map.out_w}, x.dtype(), std::move(out), {x},
                     std::move(bw));
}

PlaneMap box_map(std::int64_t in_h, std::int64_t in_w, std::int64_t out_h, std::int64_t out_w,
                 auto&& row_bin, auto&& col_bin) {
  PlaneMap m{in_h, in_w, out_h, out_w, {0}, {}, {}};
  for (std::int64_t oy = 0; oy < out_h; ++oy) {
    const auto [y0, y1] = row_bin(oy);
    for (std::int64_t ox = 0; ox < out_w; ++ox) {
      const auto [x0, x1] = col_bin(ox);
      const double wgt = 1.0 / static_cast<double>((y1 - y0) * (x1 - x0));
      for (std::int64_t y = y0; y < y1; ++y) {
        for (std::int64_t x = x0; x < x1; ++x) {
          m.index.push_back(y * in_w + x);
          m.weight.push_back(wgt);
        }
      }
      m.offsets.push_back(static_cast<std::int64_t>(m.index.size()));
    }
  }
  return m;
}

}  // namespace

// ---------------------------------------------------------------- pooling

Tensor global_avg_pool(const Tensor& x) {
  const auto d = dims_of(x, "global_avg_pool");
  const std::int64_t hw = d.h * d.w;
  auto px = x.data();
  std::vector<double> out(static_cast<std::size_t>(d.n * d.c));
  for (std::int64_t p = 0; p < d.n * d.c; ++p) {
    double s = 0.0;
    for (std::int64_t i = 0; i < hw; ++i) s += px[p * hw + i];
    out[p] = s / static_cast<double>(hw);
  }
  flops::add(out.size());
  BackwardFn bw;
  if (needs_grad({&x})) {
    bw = [hw, total = x.numel()](std::span<const double> g) -> Grads {
      std::vector<double> gx(static_cast<std::size_t>(total));
      const double f = 1.0 / static_cast<double>(hw);
      for (std::int64_t i = 0; i < total; ++i) gx[i] = g[i / hw] * f;
      return {std::move(gx)};
    };
  }
  return make_result("global_avg_pool", Shape{d.n, d.c, 1, 1}, x.dtype(), std::move(out), {x},
                     std::move(bw));
}

Tensor adaptive_avg_pool(const Tensor& x, std::int64_t out_h, std::int64_t out_w) {
  const auto d = dims_of(x, "adaptive_avg_pool");
  if (out_h < 1 || out_w < 1 || out_h > d.h || out_w > d.w) {
    throw ShapeError("adaptive_avg_pool: target " + std::to_string(out_h) + "x" +
                     std::to_string(out_w) + " exceeds input " + x.shape().to_string());
  }
  auto rows = [&](std::int64_t i) {
    return std::pair{i * d.h / out_h, (i + 1) * d.h / out_h};
  };
  auto cols = [&](std::int64_t j) {
    return std::pair{j * d.w / out_w, (j + 1) * d.w / out_w};
  };
  return apply_plane_map("adaptive_avg_pool", x, box_map(d.h, d.w, out_h, out_w, rows, cols));
}

Tensor avg_pool2d(const Tensor& x, std::int64_t kernel, std::int64_t stride) {
  const auto d = dims_of(x, "avg_pool2d");
  if (kernel < 1 || stride < 1 || kernel > d.h || kernel > d.w) {
    throw ShapeError("avg_pool2d: invalid window for " + x.shape().to_string());
  }
  const std::int64_t oh = (d.h - kernel) / stride + 1;
  const std::int64_t ow = (d.w - kernel) / stride + 1;
  auto bin = [&](std::int64_t i) { return std::pair{i * stride, i * stride + kernel}; };
  return apply_plane_map("avg_pool2d", x, box_map(d.h, d.w, oh, ow, bin, bin));
}

Tensor max_pool2d(const Tensor& x, std::int64_t kernel, std::int64_t stride,
                  std::int64_t padding) {
  const auto d = dims_of(x, "max_pool2d");
  if (kernel < 1 || stride < 1 || padding < 0 || 2 * padding > kernel) {
    throw ShapeError("max_pool2d: invalid window");
  }
  const std::int64_t oh = (d.h + 2 * padding - kernel) / stride + 1;
  const std::int64_t ow = (d.w + 2 * padding - kernel) / stride + 1;
  if (oh < 1 || ow < 1) throw ShapeError("max_pool2d: input too small");
  const std::int64_t planes = d.n * d.c;
  auto px = x.data();
  std::vector<double> out(static_cast<std::size_t>(planes * oh * ow));
  std::vector<std::int64_t> arg(out.size());
  for (std::int64_t p = 0; p < planes; ++p) {
    for (std::int64_t oy = 0; oy < oh; ++oy) {
      for (std::int64_t ox = 0; ox < ow; ++ox) {
        double best = -std::numeric_limits<double>::infinity();
        std::int64_t best_i = -1;
        for (std::int64_t ky = 0; ky < kernel; ++ky) {
          const std::int64_t iy = oy * stride - padding + ky;
          if (iy < 0 || iy >= d.h) continue;
          for (std::int64_t kx = 0; kx < kernel; ++kx) {
            const std::int64_t ix = ox * stride - padding + kx;
            if (ix < 0 || ix >= d.w) continue;
            const std::int64_t i = p * d.h * d.w + iy * d.w + ix;
            if (best_i < 0 || px[i] > best) {
              best = px[i];
              best_i = i;
            }
          }
        }
        const auto o = (p * oh + oy) * ow + ox;
        out[o] = best;
        arg[o] = best_i;
      }
    }
  }
  flops::add(out.size());
  BackwardFn bw;
  if (needs_grad({&x})) {
    bw = [arg, total = x.numel()](std::span<const double> g) -> Grads {
      std::vector<double> gx(static_cast<std::size_t>(total), 0.0);
      for (std::size_t o = 0; o < arg.size(); ++o) gx[arg[o]] += g[o];
      return {std::move(gx)};
    };
  }
  return make_result("max_pool2d", Shape{d.n, d.c, oh, ow}, x.dtype(), std::move(out), {x},
                     std::move(bw));
}

// ---------------------------------------------------------------- resampling

Tensor upsample_nearest(const Tensor& x, std::int64_t scale) {
  const auto d = dims_of(x, "upsample_nearest");
  if (scale < 2) throw ShapeError("upsample_nearest: scale must be an integer >= 2");
  PlaneMap m{d.h, d.w, d.h * scale, d.w * scale, {0}, {}, {}};
  for (std::int64_t oy = 0; oy < m.out_h; ++oy) {
    for (std::int64_t ox = 0; ox < m.out_w; ++ox) {
      m.index.push_back((oy / scale) * d.w + ox / scale);
      m.weight.push_back(1.0);
      m.offsets.push_back(static_cast<std::int64_t>(m.index.size()));
    }
  }
  return apply_plane_map("upsample_nearest", x, std::move(m));
}

Tensor resize_bilinear(const Tensor& x, std::int64_t out_h, std::int64_t out_w) {
  const auto d = dims_of(x, "resize_bilinear");
  if (out_h < 1 || out_w < 1) throw ShapeError("resize_bilinear: invalid target extent");
  // Source coordinate (dst + 0.5) * in / out - 0.5, clamped at 0.
  auto taps = [](std::int64_t dst, std::int64_t in, std::int64_t out) {
    const double scale = static_cast<double>(in) / static_cast<double>(out);
    double src = (static_cast<double>(dst) + 0.5) * scale - 0.5;
    if (src < 0.0) src = 0.0;
    auto i0 = static_cast<std::int64_t>(std::floor(src));
    if (i0 > in - 1) i0 = in - 1;
    const std::int64_t i1 = std::min(i0 + 1, in - 1);
    const double lambda = src - static_cast<double>(i0);
    return std::tuple{i0, i1, lambda};
  };
  PlaneMap m{d.h, d.w, out_h, out_w, {0}, {}, {}};
  for (std::int64_t oy = 0; oy < out_h; ++oy) {
    const auto [y0, y1, ly] = taps(oy, d.h, out_h);
    for (std::int64_t ox = 0; ox < out_w; ++ox) {
      const auto [x0, x1, lx] = taps(ox, d.w, out_w);
      const std::int64_t idx[4] = {y0 * d.w + x0, y0 * d.w + x1, y1 * d.w + x0, y1 * d.w + x1};
      const double wts[4] = {(1 - ly) * (1 - lx), (1 - ly) * lx, ly * (1 - lx), ly * lx};
      for (int k = 0; k < 4; ++k) {
        m.index.push_back(idx[k]);
        m.weight.push_back(wts[k]);
      }
      m.offsets.push_back(static_cast<std::int64_t>(m.index.size()));
    }
  }
  return apply_plane_map("resize_bilinear", x, std::move(m));
}

// ---------------------------------------------------------------- gating / noise

Tensor upsample(const Tensor& x, std::int64_t scale, UpsampleMode mode) {
  if (mode == UpsampleMode::nearest) return upsample_nearest(x, scale);
  if (scale < 1) throw ShapeError("upsample: scale must be positive");
  const auto d = dims_of(x, "upsample");
  return resize_bilinear(x, d.h * scale, d.w * scale);
}

Tensor glu(const Tensor& x) {
  const auto d = dims_of(x, "glu");
  if (d.c % 2 != 0) throw ShapeError("glu: channel extent must be even, got " + std::to_string(d.c));
  const std::int64_t half = d.c / 2;
  const std::int64_t plane = half * d.h * d.w;
  auto px = x.data();
  std::vector<double> out(static_cast<std::size_t>(d.n * plane));
  std::vector<double> gate(out.size());
  for (std::int64_t b = 0; b < d.n; ++b) {
    const double* a = px.data() + b * 2 * plane;
    const double* g = a + plane;
    for (std::int64_t i = 0; i < plane; ++i) {
      const double z = g[i];
      const double s = z >= 0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
      gate[b * plane + i] = s;
      out[b * plane + i] = a[i] * s;
    }
  }
  flops::add(out.size());
  BackwardFn bw;
  if (needs_grad({&x})) {
    bw = [x, gate = std::move(gate), n = d.n, plane](std::span<const double> g) -> Grads {
      auto px = x.data();
      std::vector<double> gx(static_cast<std::size_t>(x.numel()));
      for (std::int64_t b = 0; b < n; ++b) {
        for (std::int64_t i = 0; i < plane; ++i) {
          const double s = gate[b * plane + i];
          const double go = g[b * plane + i];
          gx[b * 2 * plane + i] = go * s;
          gx[b * 2 * plane + plane + i] = go * px[b * 2 * plane + i] * s * (1.0 - s);
        }
      }
      return {std::move(gx)};
    };
  }
  return make_result("glu", Shape{d.n, half, d.h, d.w}, x.dtype(), std::move(out), {x},
                     std::move(bw));
}

Tensor inject_noise(const Tensor& x, std::uint64_t seed, double stddev) {
  if (stddev < 0.0) throw ConfigError("inject_noise: stddev must be >= 0");
  std::vector<double> out = x.to_vector();
  if (stddev > 0.0) {
    std::mt19937_64 gen(seed);
    std::normal_distribution<double> dist(0.0, 1.0);
    for (auto& v : out) v += stddev * dist(gen);
  }
  flops::add(out.size());
  BackwardFn bw;
  if (needs_grad({&x})) {
    bw = [](std::span<const double> g) -> Grads { return {{g.begin(), g.end()}}; };
  }
  return make_result("inject_noise", x.shape(), x.dtype(), std::move(out), {x}, std::move(bw));
}

// ---------------------------------------------------------------- batchnorm

BatchNormState BatchNormState::create(std::int64_t channels) {
  BatchNormState s;
  s.gamma = Tensor::ones(Shape{channels});
  s.beta = Tensor::zeros(Shape{channels});
  s.running_mean = Tensor::zeros(Shape{channels});
  s.running_var = Tensor::ones(Shape{channels});
  s.gamma.set_requires_grad(true);
  s.beta.set_requires_grad(true);
  return s;
}

Tensor batchnorm(const Tensor& x, BatchNormState& state) {
  const auto d = dims_of(x, "batchnorm");
  if (state.gamma.shape() != Shape{d.c} || state.beta.shape() != Shape{d.c}) {
    throw ShapeError("batchnorm: affine parameters do not match " + std::to_string(d.c) +
                     " channels");
  }
  if (state.training && d.n < 2) {
    throw ShapeError("batchnorm: train mode needs a batch of at least 2");
  }
  const std::int64_t hw = d.h * d.w;
  const std::int64_t count = d.n * hw;
  auto px = x.data();
  auto gamma = state.gamma.data();
  auto beta = state.beta.data();

  std::vector<double> mean(static_cast<std::size_t>(d.c)), inv_std(static_cast<std::size_t>(d.c));
  if (state.training) {
    auto rm = state.running_mean.mutable_data();
    auto rv = state.running_var.mutable_data();
    for (std::int64_t c = 0; c < d.c; ++c) {
      double s = 0.0;
      for (std::int64_t b = 0; b < d.n; ++b) {
        const double* p = px.data() + (b * d.c + c) * hw;
        for (std::int64_t i = 0; i < hw; ++i) s += p[i];
      }
      const double mu = s / static_cast<double>(count);
      double ss = 0.0;
      for (std::int64_t b = 0; b < d.n; ++b) {
        const double* p = px.data() + (b * d.c + c) * hw;
        for (std::int64_t i = 0; i < hw; ++i) ss += (p[i] - mu) * (p[i] - mu);
      }
      const double var = ss / static_cast<double>(count);
      mean[c] = mu;
      inv_std[c] = 1.0 / std::sqrt(var + state.eps);
      const double unbiased = ss / static_cast<double>(count - 1);
      rm[c] = (1.0 - state.momentum) * rm[c] + state.momentum * mu;
      rv[c] = (1.0 - state.momentum) * rv[c] + state.momentum * unbiased;
    }
  } else {
    auto rm = state.running_mean.data();
    auto rv = state.running_var.data();
    for (std::int64_t c = 0; c < d.c; ++c) {
      mean[c] = rm[c];
      inv_std[c] = 1.0 / std::sqrt(rv[c] + state.eps);
    }
  }

  std::vector<double> xhat(static_cast<std::size_t>(x.numel()));
  std::vector<double> out(xhat.size());
  for (std::int64_t b = 0; b < d.n; ++b) {
    for (std::int64_t c = 0; c < d.c; ++c) {
      const std::int64_t base = (b * d.c + c) * hw;
      for (std::int64_t i = 0; i < hw; ++i) {
        const double v = (px[base + i] - mean[c]) * inv_std[c];
        xhat[base + i] = v;
        out[base + i] = gamma[c] * v + beta[c];
      }
    }
  }
  flops::add(out.size());

  BackwardFn bw;
  const Tensor& g_t = state.gamma;
  const Tensor& b_t = state.beta;
  if (needs_grad({&x, &g_t, &b_t})) {
    bw = [x, gamma_t = state.gamma, beta_t = state.beta, xhat = std::move(xhat), inv_std, d, hw,
          count, training = state.training](std::span<const double> g) -> Grads {
      auto gamma = gamma_t.data();
      std::vector<double> gx, gg, gb;
      std::vector<double> sum_g(static_cast<std::size_t>(d.c), 0.0);
      std::vector<double> sum_gx(static_cast<std::size_t>(d.c), 0.0);
      for (std::int64_t b = 0; b < d.n; ++b) {
        for (std::int64_t c = 0; c < d.c; ++c) {
          const std::int64_t base = (b * d.c + c) * hw;
          for (std::int64_t i = 0; i < hw; ++i) {
            sum_g[c] += g[base + i];
            sum_gx[c] += g[base + i] * xhat[base + i];
          }
        }
      }
      if (x.requires_grad()) {
        gx.resize(static_cast<std::size_t>(x.numel()));
        const double m = static_cast<double>(count);
        for (std::int64_t b = 0; b < d.n; ++b) {
          for (std::int64_t c = 0; c < d.c; ++c) {
            const std::int64_t base = (b * d.c + c) * hw;
            const double k = gamma[c] * inv_std[c];
            for (std::int64_t i = 0; i < hw; ++i) {
              if (training) {
                gx[base + i] =
                    k * (g[base + i] - sum_g[c] / m - xhat[base + i] * sum_gx[c] / m);
              } else {
                gx[base + i] = k * g[base + i];
              }
            }
          }
        }
      }
      if (gamma_t.requires_grad()) gg = sum_gx;
      if (beta_t.requires_grad()) gb = sum_g;
      return {std::move(gx), std::move(gg), std::move(gb)};
    };
  }
  return make_result("batchnorm", x.shape(), x.dtype(), std::move(out),
                     {x, state.gamma, state.beta}, std::move(bw));
}

}  // namespace sase
