#include <algorithm>

#include "sase/attention.hpp"
#include "sase/error.hpp"
#include "sase/ops.hpp"

namespace sase {

// ---------------------------------------------------------------- SE

std::int64_t SEConfig::hidden() const { return channels / reduction; }

void SEConfig::validate() const {
  if (channels < 1 || reduction < 1) throw ConfigError("se: channels and reduction must be >= 1");
  if (channels % reduction != 0) {
    throw ConfigError("se: channels " + std::to_string(channels) +
                      " not divisible by reduction " + std::to_string(reduction));
  }
}

namespace {

const SEConfig& validated(const SEConfig& c) {
  c.validate();
  return c;
}

}  // namespace

SqueezeExcitation::SqueezeExcitation(const SEConfig& config, InitRng& rng)
    : config_(validated(config)),
      fc1_(config.channels, config.hidden(), true, rng),
      fc2_(config.hidden(), config.channels, true, rng) {}

Tensor SqueezeExcitation::gate(const Tensor& y) {
  if (y.rank() != 4 || y.dim(1) != config_.channels) {
    throw ShapeError("se: expected [B," + std::to_string(config_.channels) + ",H,W], got " +
                     y.shape().to_string());
  }
  const std::int64_t b = y.dim(0);
  const Tensor squeezed = reshape(global_avg_pool(y), Shape{b, config_.channels});
  const Tensor excited = sigmoid(fc2_.forward(relu(fc1_.forward(squeezed))));
  return reshape(excited, Shape{b, config_.channels, 1, 1});
}

Tensor SqueezeExcitation::forward(const Tensor& y) { return mul(y, gate(y)); }

Shape SqueezeExcitation::trace_gate(const Shape& in, CostReport& report,
                                    const std::string& prefix) const {
  if (in.rank() != 4 || in[1] != config_.channels) {
    throw ShapeError("se: input " + in.to_string() + " channel mismatch");
  }
  const std::int64_t b = in[0];
  trace_elementwise(report, join_name(prefix, "pool"), Shape{b, config_.channels, 1, 1});
  const Shape h = fc1_.trace(Shape{b, config_.channels}, report, join_name(prefix, "fc1"));
  trace_elementwise(report, join_name(prefix, "relu"), h);
  const Shape o = fc2_.trace(h, report, join_name(prefix, "fc2"));
  trace_elementwise(report, join_name(prefix, "sigmoid"), o);
  return Shape{b, config_.channels, 1, 1};
}

Shape SqueezeExcitation::trace(const Shape& in, CostReport& report,
                               const std::string& prefix) const {
  trace_gate(in, report, prefix);
  trace_elementwise(report, join_name(prefix, "scale"), in);
  return in;
}

void SqueezeExcitation::collect(const std::string& prefix, ParamStore& store) const {
  fc1_.collect(join_name(prefix, "fc1"), store);
  fc2_.collect(join_name(prefix, "fc2"), store);
}

// ---------------------------------------------------------------- SLE

void SLEConfig::validate() const {
  if (source_channels < 1 || target_channels < 1 || pool_size < 1 || hidden < 0) {
    throw ConfigError("sle: channel counts and pool size must be positive");
  }
}

namespace {

Conv2dSpec sle_reduce_spec(const SLEConfig& c) {
  c.validate();
  Conv2dSpec s;
  s.in_channels = c.source_channels;
  s.out_channels = c.hidden_width();
  s.kernel = {c.pool_size, c.pool_size};
  s.bias = c.bias;
  return s;
}

Conv2dSpec pointwise(std::int64_t in, std::int64_t out, bool bias) {
  Conv2dSpec s;
  s.in_channels = in;
  s.out_channels = out;
  s.kernel = {1, 1};
  s.bias = bias;
  return s;
}

}  // namespace

SkipLayerExcitation::SkipLayerExcitation(const SLEConfig& config, InitRng& rng)
    : config_(config),
      reduce_(sle_reduce_spec(config), rng),
      expand_(pointwise(config.hidden_width(), config.target_channels, config.bias), rng) {}

Tensor SkipLayerExcitation::gate(const Tensor& source) {
  if (source.rank() != 4 || source.dim(1) != config_.source_channels) {
    throw ShapeError("sle: source " + source.shape().to_string() + " channel mismatch");
  }
  if (source.dim(2) < config_.pool_size || source.dim(3) < config_.pool_size) {
    throw ShapeError("sle: source extent smaller than the pool size");
  }
  const Tensor pooled = adaptive_avg_pool(source, config_.pool_size, config_.pool_size);
  return sigmoid(expand_.forward(leaky_relu(reduce_.forward(pooled), config_.leaky_slope)));
}

Tensor SkipLayerExcitation::forward(const Tensor& source, const Tensor& target) {
  if (target.rank() != 4 || target.dim(1) != config_.target_channels ||
      target.dim(0) != source.dim(0)) {
    throw ShapeError("sle: target " + target.shape().to_string() + " does not match config");
  }
  return mul(target, gate(source));
}

void SkipLayerExcitation::trace(const Shape& source, const Shape& target, CostReport& report,
                                const std::string& prefix) const {
  if (source.rank() != 4 || source[2] < config_.pool_size || source[3] < config_.pool_size) {
    throw ShapeError("sle: source " + source.to_string() + " too small");
  }
  const Shape pooled{source[0], source[1], config_.pool_size, config_.pool_size};
  trace_elementwise(report, join_name(prefix, "pool"), pooled);
  const Shape h = reduce_.trace(pooled, report, join_name(prefix, "conv_reduce"));
  trace_elementwise(report, join_name(prefix, "lrelu"), h);
  const Shape g = expand_.trace(h, report, join_name(prefix, "conv_expand"));
  trace_elementwise(report, join_name(prefix, "sigmoid"), g);
  trace_elementwise(report, join_name(prefix, "scale"), target);
}

void SkipLayerExcitation::collect(const std::string& prefix, ParamStore& store) const {
  reduce_.collect(join_name(prefix, "conv_reduce"), store);
  expand_.collect(join_name(prefix, "conv_expand"), store);
}

void match_sle_to_se(SqueezeExcitation& se, SkipLayerExcitation& sle) {
  Conv2d& r = sle.conv_reduce();
  Conv2d& e = sle.conv_expand();
  if (r.spec().kernel != std::pair<std::int64_t, std::int64_t>{1, 1} || !r.spec().bias ||
      !e.spec().bias || r.weight().numel() != se.fc1().weight().numel() ||
      e.weight().numel() != se.fc2().weight().numel()) {
    throw ConfigError("match_sle_to_se: SLE must use pool 1, bias, and hidden = C/r");
  }
  auto copy = [](const Tensor& from, Tensor& to) {
    std::copy(from.data().begin(), from.data().end(), to.mutable_data().begin());
  };
  copy(se.fc1().weight(), r.weight());
  copy(se.fc1().bias(), r.bias());
  copy(se.fc2().weight(), e.weight());
  copy(se.fc2().bias(), e.bias());
}

}  // namespace sase
