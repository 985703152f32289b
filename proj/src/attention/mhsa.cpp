#include <cmath>

#include "sase/attention.hpp"
#include "sase/error.hpp"
#include "sase/ops.hpp"

namespace sase {

void MHSAConfig::validate() const {
  if (channels < 1 || heads < 1) throw ConfigError("mhsa: channels and heads must be positive");
  if (channels % heads != 0) {
    throw ConfigError("mhsa: channels " + std::to_string(channels) + " not divisible by " +
                      std::to_string(heads) + " heads");
  }
}

MultiHeadSelfAttention::MultiHeadSelfAttention(const MHSAConfig& config, InitRng& rng)
    : config_(config) {
  config_.validate();
  const Shape w{config_.channels, config_.channels};
  wq_ = rng.kaiming_uniform(w, config_.channels);
  wk_ = rng.kaiming_uniform(w, config_.channels);
  wv_ = rng.kaiming_uniform(w, config_.channels);
}

namespace {

Tensor project(const Tensor& x, const Tensor& w) {
  const std::int64_t c = w.dim(0);
  Conv2dSpec s;
  s.in_channels = c;
  s.out_channels = c;
  s.kernel = {1, 1};
  return conv2d(x, reshape(w, Shape{c, c, 1, 1}), Tensor(), s);
}

}  // namespace

Tensor MultiHeadSelfAttention::forward(const Tensor& x) {
  if (x.rank() != 4 || x.dim(1) != config_.channels) {
    throw ShapeError("mhsa: expected [B," + std::to_string(config_.channels) + ",H,W], got " +
                     x.shape().to_string());
  }
  const std::int64_t b = x.dim(0), h = x.dim(2), w = x.dim(3), n = h * w;
  const std::int64_t g = config_.heads, d = config_.head_dim();
  // [B,c,H,W] -> [B*g, d, N]: each head's channels laid out as d x N.
  const Shape heads_dn{b * g, d, n};
  const Tensor q = transpose(reshape(project(x, wq_), heads_dn));  // [B*g, N, d]
  const Tensor k = reshape(project(x, wk_), heads_dn);             // [B*g, d, N]
  const Tensor v = transpose(reshape(project(x, wv_), heads_dn));  // [B*g, N, d]
  const Tensor logits = scale(matmul(q, k), 1.0 / std::sqrt(static_cast<double>(d)));
  const Tensor attn = softmax(logits, 2);
  const Tensor out = transpose(matmul(attn, v));  // [B*g, d, N]
  return reshape(out, x.shape());
}

Shape MultiHeadSelfAttention::trace(const Shape& in, CostReport& report,
                                    const std::string& prefix) const {
  if (in.rank() != 4 || in[1] != config_.channels) {
    throw ShapeError("mhsa: input " + in.to_string() + " channel mismatch");
  }
  const auto b = static_cast<std::uint64_t>(in[0]);
  const auto c = static_cast<std::uint64_t>(config_.channels);
  const auto g = static_cast<std::uint64_t>(config_.heads);
  const auto d = static_cast<std::uint64_t>(config_.head_dim());
  const auto n = static_cast<std::uint64_t>(in[2] * in[3]);
  const std::uint64_t proj = b * c * c * n;
  const std::uint64_t proj_params = c * c;
  report.add(join_name(prefix, "q_proj"), proj_params, proj, in);
  report.add(join_name(prefix, "k_proj"), proj_params, proj, in);
  report.add(join_name(prefix, "v_proj"), proj_params, proj, in);
  const auto bg = static_cast<std::int64_t>(b * g);
  const Shape scores{bg, static_cast<std::int64_t>(n), static_cast<std::int64_t>(n)};
  report.add(join_name(prefix, "core.scores"), 0, b * g * n * n * d, scores);
  report.add(join_name(prefix, "core.scale"), 0, b * g * n * n, scores);
  report.add(join_name(prefix, "core.softmax"), 0, b * g * n * n, scores);
  report.add(join_name(prefix, "core.apply"), 0, b * g * n * n * d, in);
  return in;
}

void MultiHeadSelfAttention::collect(const std::string& prefix, ParamStore& store) const {
  store.add(join_name(prefix, "w_q"), wq_);
  store.add(join_name(prefix, "w_k"), wk_);
  store.add(join_name(prefix, "w_v"), wv_);
}

Tensor mhsa_naive_oracle(const Tensor& x, const Tensor& wq, const Tensor& wk, const Tensor& wv,
                         std::int64_t heads) {
  if (x.rank() != 4) throw ShapeError("mhsa_naive_oracle: expected [B,c,H,W]");
  const std::int64_t b = x.dim(0), c = x.dim(1), n = x.dim(2) * x.dim(3);
  if (c % heads != 0) throw ConfigError("mhsa_naive_oracle: channels not divisible by heads");
  if (wq.shape() != Shape{c, c} || wk.shape() != Shape{c, c} || wv.shape() != Shape{c, c}) {
    throw ShapeError("mhsa_naive_oracle: projection weights must be [c,c]");
  }
  const std::int64_t d = c / heads;
  const auto px = x.data();
  auto proj = [&](const Tensor& w, std::int64_t bi, std::int64_t ch, std::int64_t t) {
    double s = 0.0;
    for (std::int64_t j = 0; j < c; ++j) s += w.data()[ch * c + j] * px[(bi * c + j) * n + t];
    return s;
  };
  std::vector<double> out(static_cast<std::size_t>(x.numel()), 0.0);
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(d));
  for (std::int64_t bi = 0; bi < b; ++bi) {
    std::vector<double> q(c * n), k(c * n), v(c * n);
    for (std::int64_t ch = 0; ch < c; ++ch) {
      for (std::int64_t t = 0; t < n; ++t) {
        q[ch * n + t] = proj(wq, bi, ch, t);
        k[ch * n + t] = proj(wk, bi, ch, t);
        v[ch * n + t] = proj(wv, bi, ch, t);
      }
    }
    for (std::int64_t hd = 0; hd < heads; ++hd) {
      for (std::int64_t t = 0; t < n; ++t) {
        std::vector<double> logit(n);
        double peak = -INFINITY;
        for (std::int64_t u = 0; u < n; ++u) {
          double s = 0.0;
          for (std::int64_t e = 0; e < d; ++e) s += q[(hd * d + e) * n + t] * k[(hd * d + e) * n + u];
          logit[u] = s * inv_sqrt_d;
          peak = std::max(peak, logit[u]);
        }
        double total = 0.0;
        for (std::int64_t u = 0; u < n; ++u) total += (logit[u] = std::exp(logit[u] - peak));
        for (std::int64_t e = 0; e < d; ++e) {
          double s = 0.0;
          for (std::int64_t u = 0; u < n; ++u) s += logit[u] / total * v[(hd * d + e) * n + u];
          out[(bi * c + hd * d + e) * n + t] = s;
        }
      }
    }
  }
  return Tensor::from_values(x.shape(), std::move(out), x.dtype());
}

}  // namespace sase
