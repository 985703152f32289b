#include "sase/attention.hpp"
#include "sase/error.hpp"
#include "sase/ops.hpp"

namespace sase {

std::int64_t SASERecogConfig::key_hidden() const {
  return std::max<std::int64_t>(1, head_dim() / key_reduction);
}

void SASERecogConfig::validate() const {
  if (channels < 1 || heads < 1 || query_reduction < 1 || key_reduction < 1) {
    throw ConfigError("sase_recog: channels, heads and reductions must be positive");
  }
  if (channels % heads != 0) {
    throw ConfigError("sase_recog: channels " + std::to_string(channels) +
                      " not divisible by " + std::to_string(heads) + " heads");
  }
  if (head_dim() % query_reduction != 0) {
    throw ConfigError("sase_recog: head dim " + std::to_string(head_dim()) +
                      " not divisible by query reduction " + std::to_string(query_reduction));
  }
  if (stride != 1 && stride != 2) throw ConfigError("sase_recog: stride must be 1 or 2");
}

namespace {

Conv2dSpec conv3x3(std::int64_t in, std::int64_t out, std::int64_t stride, PaddingMode mode) {
  Conv2dSpec s = Conv2dSpec::same(in, out, 3, 1, stride);
  s.padding_mode = mode;
  return s;
}

SASERecog::Head make_head(const SASERecogConfig& c, InitRng& rng) {
  const std::int64_t d = c.head_dim();
  SEConfig q{d, c.query_reduction};
  return SASERecog::Head{SqueezeExcitation(q, rng),
                         Conv2d(conv3x3(d, c.key_hidden(), 1, c.padding_mode), rng),
                         BatchNorm2d(c.key_hidden()),
                         Conv2d(conv3x3(c.key_hidden(), d, 1, c.padding_mode), rng),
                         Conv2d(conv3x3(d, d, c.stride, c.padding_mode), rng)};
}

std::string head_name(const std::string& prefix, std::size_t i) {
  return join_name(prefix, "head" + std::to_string(i));
}

}  // namespace

SASERecog::SASERecog(const SASERecogConfig& config, InitRng& rng) : config_(config) {
  config_.validate();
  for (std::int64_t i = 0; i < config_.heads; ++i) heads_.push_back(make_head(config_, rng));
}

void SASERecog::set_training(bool training) {
  for (auto& h : heads_) h.key_bn.set_training(training);
}

SASERecogResult SASERecog::forward_full(const Tensor& x) {
  if (x.rank() != 4 || x.dim(1) != config_.channels) {
    throw ShapeError("sase_recog: expected [B," + std::to_string(config_.channels) +
                     ",H,W], got " + x.shape().to_string());
  }
  if (config_.stride == 2 && (x.dim(2) % 2 != 0 || x.dim(3) % 2 != 0)) {
    throw ShapeError("sase_recog: stride 2 needs even spatial extents, got " +
                     x.shape().to_string());
  }
  const std::int64_t d = config_.head_dim();
  SASERecogResult result;
  std::vector<Tensor> parts;
  for (std::size_t i = 0; i < heads_.size(); ++i) {
    Head& h = heads_[i];
    const Tensor xi = heads_.size() == 1 ? x : narrow(x, 1, static_cast<std::int64_t>(i) * d, d);
    const Tensor xin = config_.stride == 2 ? avg_pool2d(xi, 2, 2) : xi;
    Tensor q = h.query.gate(xin);
    Tensor k = h.key_out.forward(relu(h.key_bn.forward(h.key_reduce.forward(xin))));
    Tensor v = h.value.forward(xi);
    Tensor a = softmax(mul(q, k), 1);
    parts.push_back(mul(a, v));
    result.queries.push_back(std::move(q));
    result.keys.push_back(std::move(k));
    result.values.push_back(std::move(v));
    result.attention.push_back(std::move(a));
  }
  result.output = parts.size() == 1 ? parts[0] : concat(parts, 1);
  return result;
}

Tensor SASERecog::forward(const Tensor& x) { return forward_full(x).output; }

Shape SASERecog::trace(const Shape& in, CostReport& report, const std::string& prefix) const {
  if (in.rank() != 4 || in[1] != config_.channels) {
    throw ShapeError("sase_recog: input " + in.to_string() + " channel mismatch");
  }
  const std::int64_t b = in[0], d = config_.head_dim();
  const Shape xi{b, d, in[2], in[3]};
  Shape out_shape;
  for (std::size_t i = 0; i < heads_.size(); ++i) {
    const Head& h = heads_[i];
    const std::string name = head_name(prefix, i);
    Shape xin = xi;
    if (config_.stride == 2) {
      xin = Shape{b, d, in[2] / 2, in[3] / 2};
      trace_elementwise(report, join_name(name, "pool"), xin);
    }
    h.query.trace_gate(xin, report, join_name(name, "query"));
    const Shape k1 = h.key_reduce.trace(xin, report, join_name(name, "key.conv_reduce"));
    h.key_bn.trace(k1, report, join_name(name, "key.bn"));
    trace_elementwise(report, join_name(name, "key.relu"), k1);
    const Shape k = h.key_out.trace(k1, report, join_name(name, "key.conv_out"));
    const Shape v = h.value.trace(xi, report, join_name(name, "value"));
    trace_elementwise(report, join_name(name, "logits"), k);
    trace_elementwise(report, join_name(name, "softmax"), k);
    trace_elementwise(report, join_name(name, "apply"), v);
    out_shape = Shape{b, config_.channels, v[2], v[3]};
  }
  return out_shape;
}

void SASERecog::collect(const std::string& prefix, ParamStore& store) const {
  for (std::size_t i = 0; i < heads_.size(); ++i) {
    const std::string name = head_name(prefix, i);
    heads_[i].query.collect(join_name(name, "query"), store);
    heads_[i].key_reduce.collect(join_name(name, "key.conv_reduce"), store);
    heads_[i].key_bn.collect(join_name(name, "key.bn"), store);
    heads_[i].key_out.collect(join_name(name, "key.conv_out"), store);
    heads_[i].value.collect(join_name(name, "value"), store);
  }
}

}  // namespace sase
