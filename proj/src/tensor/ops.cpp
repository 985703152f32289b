#include "sase/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "sase/flop_counter.hpp"
#include "sase/kernels.hpp"

namespace sase {

using detail::BackwardFn;
using detail::make_result;
using detail::needs_grad;
using Grads = std::vector<std::vector<double>>;

namespace {

// Strides of `src` viewed inside the rank of `out`, zero on broadcast axes.
std::vector<std::int64_t> broadcast_strides(const Shape& src, const Shape& out) {
  const std::size_t r = out.rank();
  std::vector<std::int64_t> st(r, 0);
  const auto s = src.strides();
  const std::size_t off = r - src.rank();
  for (std::size_t i = 0; i < src.rank(); ++i) {
    st[off + i] = src[i] == 1 ? 0 : s[i];
  }
  return st;
}

// Calls f(out_index, a_offset, b_offset) for every element of `out`.
template <typename F>
void for_each_broadcast(const Shape& out, const Shape& a, const Shape& b, F&& f) {
  const std::int64_t n = out.numel();
  if (a == out && b == out) {
    for (std::int64_t i = 0; i < n; ++i) f(i, i, i);
    return;
  }
  const std::size_t r = out.rank();
  if (r == 0) {
    f(0, 0, 0);
    return;
  }
  const auto sa = broadcast_strides(a, out);
  const auto sb = broadcast_strides(b, out);
  const std::int64_t inner = out[r - 1];
  const std::int64_t ia_step = sa[r - 1];
  const std::int64_t ib_step = sb[r - 1];
  std::vector<std::int64_t> idx(r, 0);
  std::int64_t oa = 0, ob = 0;
  for (std::int64_t base = 0; base < n; base += inner) {
    for (std::int64_t j = 0; j < inner; ++j) f(base + j, oa + j * ia_step, ob + j * ib_step);
    // advance the odometer over all but the innermost axis
    for (std::size_t ax = r - 1; ax-- > 0;) {
      ++idx[ax];
      oa += sa[ax];
      ob += sb[ax];
      if (idx[ax] < out[ax]) break;
      oa -= sa[ax] * out[ax];
      ob -= sb[ax] * out[ax];
      idx[ax] = 0;
    }
  }
}

Tensor unary(const char* name, const Tensor& a, double (*fwd)(double, double), double param,
             double (*dfn)(double x, double y, double param)) {
  auto in = a.data();
  std::vector<double> out(in.size());
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = fwd(in[i], param);
  flops::add(out.size());
  BackwardFn bw;
  if (needs_grad({&a})) {
    std::vector<double> y = out;
    bw = [a, y = std::move(y), dfn, param](std::span<const double> g) -> Grads {
      auto x = a.data();
      std::vector<double> gx(g.size());
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] = g[i] * dfn(x[i], y[i], param);
      return {std::move(gx)};
    };
  }
  return make_result(name, a.shape(), a.dtype(), std::move(out), {a}, std::move(bw));
}

double stable_sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

namespace detail {

std::vector<double> sum_to_shape(std::span<const double> grad, const Shape& from,
                                 const Shape& to) {
  if (from == to) return {grad.begin(), grad.end()};
  std::vector<double> out(static_cast<std::size_t>(to.numel()), 0.0);
  for_each_broadcast(from, to, to, [&](std::int64_t i, std::int64_t t, std::int64_t) {
    out[static_cast<std::size_t>(t)] += grad[static_cast<std::size_t>(i)];
  });
  return out;
}

}  // namespace detail

// ---------------------------------------------------------------- binary

namespace {

enum class Bin { add, sub, mul, div };

Tensor binary(Bin op, const Tensor& a, const Tensor& b, double eps) {
  const DType dt = detail::result_dtype(a, b);
  const Shape out_shape = Shape::broadcast(a.shape(), b.shape());
  auto da = a.data();
  auto db = b.data();
  std::vector<double> out(static_cast<std::size_t>(out_shape.numel()));
  const char* name = "add";
  switch (op) {
    case Bin::add:
      for_each_broadcast(out_shape, a.shape(), b.shape(),
                         [&](auto i, auto ia, auto ib) { out[i] = da[ia] + db[ib]; });
      break;
    case Bin::sub:
      name = "sub";
      for_each_broadcast(out_shape, a.shape(), b.shape(),
                         [&](auto i, auto ia, auto ib) { out[i] = da[ia] - db[ib]; });
      break;
    case Bin::mul:
      name = "mul";
      for_each_broadcast(out_shape, a.shape(), b.shape(),
                         [&](auto i, auto ia, auto ib) { out[i] = da[ia] * db[ib]; });
      break;
    case Bin::div:
      name = "div";
      if (eps <= 0.0) {
        for (double v : db) {
          if (v == 0.0) throw NumericError("division by zero (no epsilon guard supplied)");
        }
      }
      for_each_broadcast(out_shape, a.shape(), b.shape(),
                         [&](auto i, auto ia, auto ib) { out[i] = da[ia] / (db[ib] + eps); });
      break;
  }
  flops::add(out.size());

  BackwardFn bw;
  if (needs_grad({&a, &b})) {
    bw = [op, a, b, out_shape, eps](std::span<const double> g) -> Grads {
      const bool need_a = a.requires_grad();
      const bool need_b = b.requires_grad();
      std::vector<double> ga, gb;
      if (op == Bin::add || op == Bin::sub) {
        if (need_a) ga = detail::sum_to_shape(g, out_shape, a.shape());
        if (need_b) {
          gb = detail::sum_to_shape(g, out_shape, b.shape());
          if (op == Bin::sub) {
            for (auto& v : gb) v = -v;
          }
        }
        return {std::move(ga), std::move(gb)};
      }
      auto va = a.data();
      auto vb = b.data();
      if (need_a) ga.assign(static_cast<std::size_t>(a.numel()), 0.0);
      if (need_b) gb.assign(static_cast<std::size_t>(b.numel()), 0.0);
      if (op == Bin::mul) {
        for_each_broadcast(out_shape, a.shape(), b.shape(), [&](auto i, auto ia, auto ib) {
          if (need_a) ga[ia] += g[i] * vb[ib];
          if (need_b) gb[ib] += g[i] * va[ia];
        });
      } else {
        for_each_broadcast(out_shape, a.shape(), b.shape(), [&](auto i, auto ia, auto ib) {
          const double den = vb[ib] + eps;
          if (need_a) ga[ia] += g[i] / den;
          if (need_b) gb[ib] -= g[i] * va[ia] / (den * den);
        });
      }
      return {std::move(ga), std::move(gb)};
    };
  }
  return make_result(name, out_shape, dt, std::move(out), {a, b}, std::move(bw));
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) { return binary(Bin::add, a, b, 0.0); }
Tensor sub(const Tensor& a, const Tensor& b) { return binary(Bin::sub, a, b, 0.0); }
Tensor mul(const Tensor& a, const Tensor& b) { return binary(Bin::mul, a, b, 0.0); }
Tensor div(const Tensor& a, const Tensor& b, double eps) {
  if (eps < 0.0) throw ShapeError("div: epsilon must be non-negative");
  return binary(Bin::div, a, b, eps);
}

// ---------------------------------------------------------------- unary

Tensor exp(const Tensor& a) {
  return unary(
      "exp", a, [](double x, double) { return std::exp(x); }, 0.0,
      [](double, double y, double) { return y; });
}

Tensor log(const Tensor& a) {
  return unary(
      "log", a, [](double x, double) { return std::log(x); }, 0.0,
      [](double x, double, double) { return 1.0 / x; });
}

Tensor relu(const Tensor& a) {
  return unary(
      "relu", a, [](double x, double) { return x > 0.0 ? x : 0.0; }, 0.0,
      [](double x, double, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Tensor leaky_relu(const Tensor& a, double slope) {
  return unary(
      "leaky_relu", a, [](double x, double s) { return x > 0.0 ? x : s * x; }, slope,
      [](double x, double, double s) { return x > 0.0 ? 1.0 : s; });
}

Tensor sigmoid(const Tensor& a) {
  return unary(
      "sigmoid", a, [](double x, double) { return stable_sigmoid(x); }, 0.0,
      [](double, double y, double) { return y * (1.0 - y); });
}

Tensor tanh(const Tensor& a) {
  return unary(
      "tanh", a, [](double x, double) { return std::tanh(x); }, 0.0,
      [](double, double y, double) { return 1.0 - y * y; });
}

Tensor scale(const Tensor& a, double factor) {
  return unary(
      "scale", a, [](double x, double f) { return x * f; }, factor,
      [](double, double, double f) { return f; });
}

Tensor add_scalar(const Tensor& a, double value) {
  return unary(
      "add_scalar", a, [](double x, double v) { return x + v; }, value,
      [](double, double, double) { return 1.0; });
}

Tensor elementwise(ElementwiseOp op, const Tensor& a, const Tensor* b, double slope) {
  const bool binary_op = op == ElementwiseOp::add || op == ElementwiseOp::sub ||
                         op == ElementwiseOp::mul || op == ElementwiseOp::div;
  if (binary_op && b == nullptr) throw ShapeError("binary elementwise op needs two operands");
  switch (op) {
    case ElementwiseOp::add: return add(a, *b);
    case ElementwiseOp::sub: return sub(a, *b);
    case ElementwiseOp::mul: return mul(a, *b);
    case ElementwiseOp::div: return div(a, *b);
    case ElementwiseOp::exp: return exp(a);
    case ElementwiseOp::log: return log(a);
    case ElementwiseOp::relu: return relu(a);
    case ElementwiseOp::leaky_relu: return leaky_relu(a, slope);
    case ElementwiseOp::sigmoid: return sigmoid(a);
    case ElementwiseOp::tanh: return tanh(a);
  }
  throw ShapeError("unknown elementwise op");
}

// ---------------------------------------------------------------- matmul

Tensor matmul(const Tensor& a, const Tensor& b) {
  const DType dt = detail::result_dtype(a, b);
  const auto& sa = a.shape();
  const auto& sb = b.shape();
  if (sa.rank() != sb.rank() || (sa.rank() != 2 && sa.rank() != 3)) {
    throw ShapeError("matmul needs two rank-2 or two rank-3 operands, got " + sa.to_string() +
                     " and " + sb.to_string());
  }
  const bool batched = sa.rank() == 3;
  const std::int64_t batch = batched ? sa[0] : 1;
  if (batched && sb[0] != batch) throw ShapeError("matmul batch mismatch");
  const std::int64_t m = sa[sa.rank() - 2], k = sa[sa.rank() - 1];
  const std::int64_t k2 = sb[sb.rank() - 2], p = sb[sb.rank() - 1];
  if (k != k2) {
    throw ShapeError("matmul inner extents differ: " + sa.to_string() + " x " + sb.to_string());
  }
  std::vector<double> out(static_cast<std::size_t>(batch * m * p));
  const double* pa = a.data().data();
  const double* pb = b.data().data();
  for (std::int64_t i = 0; i < batch; ++i) {
    kernels::gemm(kernels::Trans::no, kernels::Trans::no, m, p, k, pa + i * m * k, k,
                  pb + i * k * p, p, 0.0, out.data() + i * m * p, p);
  }
  flops::add(static_cast<std::uint64_t>(batch * m * k * p));
  Shape out_shape = batched ? Shape{batch, m, p} : Shape{m, p};

  BackwardFn bw;
  if (needs_grad({&a, &b})) {
    bw = [a, b, batch, m, k, p](std::span<const double> g) -> Grads {
      std::vector<double> ga, gb;
      const double* pa = a.data().data();
      const double* pb = b.data().data();
      if (a.requires_grad()) {
        ga.assign(static_cast<std::size_t>(batch * m * k), 0.0);
        for (std::int64_t i = 0; i < batch; ++i) {
          kernels::gemm(kernels::Trans::no, kernels::Trans::yes, m, k, p, g.data() + i * m * p, p,
                        pb + i * k * p, p, 0.0, ga.data() + i * m * k, k);
        }
      }
      if (b.requires_grad()) {
        gb.assign(static_cast<std::size_t>(batch * k * p), 0.0);
        for (std::int64_t i = 0; i < batch; ++i) {
          kernels::gemm(kernels::Trans::yes, kernels::Trans::no, k, p, m, pa + i * m * k, k,
                        g.data() + i * m * p, p, 0.0, gb.data() + i * k * p, p);
        }
      }
      return {std::move(ga), std::move(gb)};
    };
  }
  return make_result("matmul", std::move(out_shape), dt, std::move(out), {a, b}, std::move(bw));
}

// ---------------------------------------------------------------- reduce

Tensor reduce(ReduceOp op, const Tensor& a, const std::vector<std::int64_t>& axes,
              bool keepdims) {
  const auto& s = a.shape();
  if (axes.empty()) throw ShapeError("reduce: empty axis set (use clone() for a copy)");
  std::vector<bool> reduced(s.rank(), false);
  for (auto ax : axes) {
    auto n = s.normalize_axis(ax);
    if (reduced[n]) throw ShapeError("reduce: repeated axis");
    reduced[n] = true;
  }
  std::vector<std::int64_t> kept_dims, out_dims;
  std::int64_t count = 1;
  for (std::size_t i = 0; i < s.rank(); ++i) {
    kept_dims.push_back(reduced[i] ? 1 : s[i]);
    if (reduced[i]) {
      count *= s[i];
      if (keepdims) out_dims.push_back(1);
    } else {
      out_dims.push_back(s[i]);
    }
  }
  const Shape kept(kept_dims);
  const std::size_t n_out = static_cast<std::size_t>(kept.numel());
  auto in = a.data();

  std::vector<double> out(n_out, op == ReduceOp::max ? -std::numeric_limits<double>::infinity()
                                                     : 0.0);
  std::vector<std::int64_t> argmax(op == ReduceOp::max ? n_out : 0, -1);
  for_each_broadcast(s, kept, kept, [&](std::int64_t i, std::int64_t o, std::int64_t) {
    const double v = in[static_cast<std::size_t>(i)];
    if (op == ReduceOp::max) {
      if (argmax[o] < 0 || v > out[o]) {
        out[o] = v;
        argmax[o] = i;
      }
    } else {
      out[o] += v;
    }
  });
  if (op == ReduceOp::mean) {
    for (auto& v : out) v /= static_cast<double>(count);
  }
  flops::add(n_out);

  BackwardFn bw;
  if (needs_grad({&a})) {
    bw = [op, s, kept, count, argmax](std::span<const double> g) -> Grads {
      std::vector<double> gx(static_cast<std::size_t>(s.numel()), 0.0);
      if (op == ReduceOp::max) {
        for (std::size_t o = 0; o < argmax.size(); ++o) gx[argmax[o]] += g[o];
      } else {
        const double f = op == ReduceOp::mean ? 1.0 / static_cast<double>(count) : 1.0;
        for_each_broadcast(s, kept, kept, [&](std::int64_t i, std::int64_t o, std::int64_t) {
          gx[i] = g[o] * f;
        });
      }
      return {std::move(gx)};
    };
  }
  const char* name = op == ReduceOp::sum ? "sum" : op == ReduceOp::mean ? "mean" : "max";
  return make_result(name, Shape(out_dims), a.dtype(), std::move(out), {a}, std::move(bw));
}

Tensor sum(const Tensor& a, const std::vector<std::int64_t>& axes, bool keepdims) {
  return reduce(ReduceOp::sum, a, axes, keepdims);
}
Tensor mean(const Tensor& a, const std::vector<std::int64_t>& axes, bool keepdims) {
  return reduce(ReduceOp::mean, a, axes, keepdims);
}
Tensor max(const Tensor& a, const std::vector<std::int64_t>& axes, bool keepdims) {
  return reduce(ReduceOp::max, a, axes, keepdims);
}

static std::vector<std::int64_t> all_axes(const Tensor& a) {
  std::vector<std::int64_t> ax(a.rank());
  std::iota(ax.begin(), ax.end(), 0);
  return ax;
}

Tensor sum_all(const Tensor& a) {
  if (a.rank() == 0) return reshape(a, Shape{});
  return reduce(ReduceOp::sum, a, all_axes(a), false);
}

Tensor mean_all(const Tensor& a) {
  if (a.rank() == 0) return reshape(a, Shape{});
  return reduce(ReduceOp::mean, a, all_axes(a), false);
}

// ---------------------------------------------------------------- softmax

Tensor softmax(const Tensor& a, std::int64_t axis) {
  const auto& s = a.shape();
  const std::size_t ax = s.normalize_axis(axis);
  std::int64_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < ax; ++i) outer *= s[i];
  for (std::size_t i = ax + 1; i < s.rank(); ++i) inner *= s[i];
  const std::int64_t n = s[ax];
  auto in = a.data();
  std::vector<double> out(in.size());
  for (std::int64_t o = 0; o < outer; ++o) {
    for (std::int64_t j = 0; j < inner; ++j) {
      const std::int64_t base = o * n * inner + j;
      double mx = -std::numeric_limits<double>::infinity();
      for (std::int64_t c = 0; c < n; ++c) mx = std::max(mx, in[base + c * inner]);
      double total = 0.0;
      for (std::int64_t c = 0; c < n; ++c) {
        const double e = std::exp(in[base + c * inner] - mx);
        out[base + c * inner] = e;
        total += e;
      }
      for (std::int64_t c = 0; c < n; ++c) out[base + c * inner] /= total;
    }
  }
  flops::add(out.size());

  BackwardFn bw;
  if (needs_grad({&a})) {
    bw = [y = out, outer, inner, n](std::span<const double> g) -> Grads {
      std::vector<double> gx(g.size());
      for (std::int64_t o = 0; o < outer; ++o) {
        for (std::int64_t j = 0; j < inner; ++j) {
          const std::int64_t base = o * n * inner + j;
          double dot = 0.0;
          for (std::int64_t c = 0; c < n; ++c) dot += g[base + c * inner] * y[base + c * inner];
          for (std::int64_t c = 0; c < n; ++c) {
            const auto k = base + c * inner;
            gx[k] = y[k] * (g[k] - dot);
          }
        }
      }
      return {std::move(gx)};
    };
  }
  return make_result("softmax", s, a.dtype(), std::move(out), {a}, std::move(bw));
}

// ---------------------------------------------------------------- layout

Tensor reshape(const Tensor& a, const Shape& shape) {
  if (shape.numel() != a.numel()) {
    throw ShapeError("reshape " + a.shape().to_string() + " -> " + shape.to_string() +
                     " changes the element count");
  }
  BackwardFn bw;
  if (needs_grad({&a})) {
    bw = [](std::span<const double> g) -> Grads { return {{g.begin(), g.end()}}; };
  }
  return make_result("reshape", shape, a.dtype(), a.to_vector(), {a}, std::move(bw));
}

Tensor permute(const Tensor& a, const std::vector<std::int64_t>& order) {
  const auto& s = a.shape();
  if (order.size() != s.rank()) throw ShapeError("permute: order rank mismatch");
  std::vector<std::size_t> perm(order.size());
  std::vector<bool> used(order.size(), false);
  std::vector<std::int64_t> out_dims(order.size());
  for (std::size_t i = 0; i < order.size(); ++i) {
    perm[i] = s.normalize_axis(order[i]);
    if (used[perm[i]]) throw ShapeError("permute: repeated axis");
    used[perm[i]] = true;
    out_dims[i] = s[perm[i]];
  }
  const Shape out_shape(out_dims);
  const auto in_strides = s.strides();
  // strides of the input seen in output axis order
  std::vector<std::int64_t> src_strides(order.size());
  for (std::size_t i = 0; i < order.size(); ++i) src_strides[i] = in_strides[perm[i]];

  auto gather = [out_shape, src_strides](std::span<const double> src, std::vector<double>& dst,
                                         bool scatter) {
    const std::size_t r = out_shape.rank();
    std::vector<std::int64_t> idx(r, 0);
    std::int64_t off = 0;
    const std::int64_t n = out_shape.numel();
    for (std::int64_t i = 0; i < n; ++i) {
      if (scatter) {
        dst[static_cast<std::size_t>(off)] = src[static_cast<std::size_t>(i)];
      } else {
        dst[static_cast<std::size_t>(i)] = src[static_cast<std::size_t>(off)];
      }
      for (std::size_t ax = r; ax-- > 0;) {
        ++idx[ax];
        off += src_strides[ax];
        if (idx[ax] < out_shape[ax]) break;
        off -= src_strides[ax] * out_shape[ax];
        idx[ax] = 0;
      }
    }
  };
  std::vector<double> out(static_cast<std::size_t>(a.numel()));
  gather(a.data(), out, false);
  BackwardFn bw;
  if (needs_grad({&a})) {
    bw = [gather](std::span<const double> g) -> Grads {
      std::vector<double> gx(g.size());
      gather(g, gx, true);
      return {std::move(gx)};
    };
  }
  return make_result("permute", out_shape, a.dtype(), std::move(out), {a}, std::move(bw));
}

Tensor transpose(const Tensor& a) {
  const auto r = static_cast<std::int64_t>(a.rank());
  if (r < 2) throw ShapeError("transpose needs rank >= 2");
  std::vector<std::int64_t> order(static_cast<std::size_t>(r));
  std::iota(order.begin(), order.end(), 0);
  std::swap(order[r - 1], order[r - 2]);
  return permute(a, order);
}

Tensor concat(const std::vector<Tensor>& parts, std::int64_t axis) {
  if (parts.empty()) throw ShapeError("concat of zero tensors");
  const auto& s0 = parts[0].shape();
  const std::size_t ax = s0.normalize_axis(axis);
  std::int64_t total = 0;
  for (const auto& p : parts) {
    const auto& s = p.shape();
    if (s.rank() != s0.rank()) throw ShapeError("concat rank mismatch");
    for (std::size_t i = 0; i < s.rank(); ++i) {
      if (i != ax && s[i] != s0[i]) {
        throw ShapeError("concat extent mismatch: " + s.to_string() + " vs " + s0.to_string());
      }
    }
    detail::result_dtype(p, parts[0]);
    total += s[ax];
  }
  std::int64_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < ax; ++i) outer *= s0[i];
  for (std::size_t i = ax + 1; i < s0.rank(); ++i) inner *= s0[i];
  auto dims = s0.dims();
  dims[ax] = total;
  std::vector<double> out(static_cast<std::size_t>(outer * total * inner));
  std::vector<std::int64_t> extents;
  std::int64_t offset = 0;
  for (const auto& p : parts) {
    const std::int64_t e = p.shape()[ax];
    extents.push_back(e);
    auto d = p.data();
    for (std::int64_t o = 0; o < outer; ++o) {
      std::copy_n(d.begin() + o * e * inner, e * inner,
                  out.begin() + (o * total + offset) * inner);
    }
    offset += e;
  }
  BackwardFn bw;
  if (needs_grad(std::span<const Tensor>(parts))) {
    bw = [extents, outer, inner, total](std::span<const double> g) -> Grads {
      Grads gs;
      std::int64_t off = 0;
      for (auto e : extents) {
        std::vector<double> gp(static_cast<std::size_t>(outer * e * inner));
        for (std::int64_t o = 0; o < outer; ++o) {
          std::copy_n(g.begin() + (o * total + off) * inner, e * inner,
                      gp.begin() + o * e * inner);
        }
        off += e;
        gs.push_back(std::move(gp));
      }
      return gs;
    };
  }
  return make_result("concat", Shape(dims), parts[0].dtype(), std::move(out), parts,
                     std::move(bw));
}

Tensor narrow(const Tensor& a, std::int64_t axis, std::int64_t start, std::int64_t length) {
  const auto& s = a.shape();
  const std::size_t ax = s.normalize_axis(axis);
  if (start < 0 || length < 1 || start + length > s[ax]) {
    throw ShapeError("narrow out of range on " + s.to_string());
  }
  std::int64_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < ax; ++i) outer *= s[i];
  for (std::size_t i = ax + 1; i < s.rank(); ++i) inner *= s[i];
  const std::int64_t n = s[ax];
  auto d = a.data();
  std::vector<double> out(static_cast<std::size_t>(outer * length * inner));
  for (std::int64_t o = 0; o < outer; ++o) {
    std::copy_n(d.begin() + (o * n + start) * inner, length * inner,
                out.begin() + o * length * inner);
  }
  auto dims = s.dims();
  dims[ax] = length;
  BackwardFn bw;
  if (needs_grad({&a})) {
    bw = [outer, inner, n, start, length](std::span<const double> g) -> Grads {
      std::vector<double> gx(static_cast<std::size_t>(outer * n * inner), 0.0);
      for (std::int64_t o = 0; o < outer; ++o) {
        std::copy_n(g.begin() + o * length * inner, length * inner,
                    gx.begin() + (o * n + start) * inner);
      }
      return {std::move(gx)};
    };
  }
  return make_result("narrow", Shape(dims), a.dtype(), std::move(out), {a}, std::move(bw));
}

std::vector<Tensor> split(const Tensor& a, std::int64_t axis, std::int64_t groups) {
  const auto& s = a.shape();
  const std::size_t ax = s.normalize_axis(axis);
  if (groups < 1 || s[ax] % groups != 0) {
    throw ShapeError("split: extent " + std::to_string(s[ax]) + " of " + s.to_string() +
                     " is not divisible by " + std::to_string(groups));
  }
  const std::int64_t part = s[ax] / groups;
  std::vector<Tensor> out;
  out.reserve(static_cast<std::size_t>(groups));
  for (std::int64_t i = 0; i < groups; ++i) out.push_back(narrow(a, axis, i * part, part));
  return out;
}

Tensor unsqueeze(const Tensor& a, std::int64_t axis) {
  auto dims = a.shape().dims();
  const auto r = static_cast<std::int64_t>(dims.size());
  if (axis < 0) axis += r + 1;
  if (axis < 0 || axis > r) throw ShapeError("unsqueeze axis out of range");
  dims.insert(dims.begin() + axis, 1);
  return reshape(a, Shape(dims));
}

Tensor squeeze(const Tensor& a, std::int64_t axis) {
  const std::size_t ax = a.shape().normalize_axis(axis);
  if (a.shape()[ax] != 1) throw ShapeError("squeeze of a non-unit axis");
  auto dims = a.shape().dims();
  dims.erase(dims.begin() + static_cast<std::ptrdiff_t>(ax));
  return reshape(a, Shape(dims));
}

// ---------------------------------------------------------------- loss

Tensor cross_entropy(const Tensor& logits, const std::vector<std::int64_t>& labels) {
  const auto& s = logits.shape();
  if (s.rank() != 2) throw ShapeError("cross_entropy expects [B,K] logits");
  const std::int64_t b = s[0], k = s[1];
  if (static_cast<std::int64_t>(labels.size()) != b) throw ShapeError("label count mismatch");
  auto z = logits.data();
  std::vector<double> prob(static_cast<std::size_t>(b * k));
  double loss = 0.0;
  for (std::int64_t i = 0; i < b; ++i) {
    if (labels[i] < 0 || labels[i] >= k) throw ShapeError("label out of range");
    double mx = -std::numeric_limits<double>::infinity();
    for (std::int64_t j = 0; j < k; ++j) mx = std::max(mx, z[i * k + j]);
    double total = 0.0;
    for (std::int64_t j = 0; j < k; ++j) total += std::exp(z[i * k + j] - mx);
    const double lse = mx + std::log(total);
    for (std::int64_t j = 0; j < k; ++j) prob[i * k + j] = std::exp(z[i * k + j] - lse);
    loss += lse - z[i * k + labels[i]];
  }
  loss /= static_cast<double>(b);
  flops::add(static_cast<std::uint64_t>(b * k));
  BackwardFn bw;
  if (needs_grad({&logits})) {
    bw = [prob = std::move(prob), labels, b, k](std::span<const double> g) -> Grads {
      std::vector<double> gz(prob);
      for (std::int64_t i = 0; i < b; ++i) gz[i * k + labels[i]] -= 1.0;
      for (auto& v : gz) v *= g[0] / static_cast<double>(b);
      return {std::move(gz)};
    };
  }
  return make_result("cross_entropy", Shape{}, logits.dtype(), {loss}, {logits}, std::move(bw));
}

}  // namespace sase
