#include "sase/module.hpp"

#include <cmath>

#include "sase/error.hpp"
#include "sase/ops.hpp"

namespace sase {

void ParamStore::add(std::string name, Tensor tensor, ParamKind kind) {
  if (!tensor.defined()) return;
  if (find(name) != nullptr) throw ConfigError("duplicate parameter name: " + name);
  entries_.push_back({std::move(name), std::move(tensor), kind});
}

std::vector<Tensor> ParamStore::trainable() const {
  std::vector<Tensor> out;
  for (const auto& e : entries_) {
    if (e.kind == ParamKind::trainable) out.push_back(e.tensor);
  }
  return out;
}

std::int64_t ParamStore::trainable_count() const {
  std::int64_t total = 0;
  for (const auto& e : entries_) {
    if (e.kind == ParamKind::trainable) total += e.tensor.numel();
  }
  return total;
}

const NamedTensor* ParamStore::find(const std::string& name) const {
  for (const auto& e : entries_) {
    if (e.name == name) return &e;
  }
  return nullptr;
}

const NamedTensor& ParamStore::at(const std::string& name) const {
  const NamedTensor* e = find(name);
  if (e == nullptr) throw ConfigError("unknown parameter: " + name);
  return *e;
}

void ParamStore::zero_grads() {
  for (auto& e : entries_) e.tensor.zero_grad();
}

void ParamStore::set_requires_grad(bool flag) {
  for (auto& e : entries_) {
    if (e.kind == ParamKind::trainable) e.tensor.set_requires_grad(flag);
  }
}

std::uint64_t InitRng::next() {
  // splitmix64
  std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ull);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

Tensor InitRng::kaiming_uniform(const Shape& shape, std::int64_t fan_in) {
  const double bound = std::sqrt(6.0 / static_cast<double>(std::max<std::int64_t>(fan_in, 1)));
  Tensor t = Tensor::uniform(shape, next(), -bound, bound);
  t.set_requires_grad(true);
  return t;
}

ParamStore Module::parameters() const {
  ParamStore store;
  collect("", store);
  return store;
}

void trace_elementwise(CostReport& report, const std::string& name, const Shape& out) {
  report.add(name, 0, static_cast<std::uint64_t>(out.numel()), out);
}

namespace {

Tensor zero_param(const Shape& shape) {
  Tensor t = Tensor::zeros(shape);
  t.set_requires_grad(true);
  return t;
}

}  // namespace

// ---------------------------------------------------------------- Conv2d

Conv2d::Conv2d(const Conv2dSpec& spec, InitRng& rng) : spec_(spec) {
  spec_.validate();
  const Shape ws = spec_.weight_shape();
  weight_ = rng.kaiming_uniform(ws, ws[1] * ws[2] * ws[3]);
  if (spec_.bias) bias_ = zero_param(Shape{spec_.out_channels});
}

Tensor Conv2d::forward(const Tensor& x) { return conv2d(x, weight_, bias_, spec_); }

Shape Conv2d::trace(const Shape& in, CostReport& report, const std::string& prefix) const {
  if (in.rank() != 4 || in[1] != spec_.in_channels) {
    throw ShapeError("conv2d: input " + in.to_string() + " does not match " +
                     std::to_string(spec_.in_channels) + " channels");
  }
  const auto [oh, ow] = spec_.output_extent(in[2], in[3]);
  const Shape out{in[0], spec_.out_channels, oh, ow};
  const std::uint64_t positions = static_cast<std::uint64_t>(out.numel());
  const Shape ws = spec_.weight_shape();
  std::uint64_t flops = positions * static_cast<std::uint64_t>(ws[1] * ws[2] * ws[3]);
  std::uint64_t params = static_cast<std::uint64_t>(ws.numel());
  if (spec_.bias) {
    flops += positions;
    params += static_cast<std::uint64_t>(spec_.out_channels);
  }
  report.add(prefix, params, flops, out);
  return out;
}

void Conv2d::collect(const std::string& prefix, ParamStore& store) const {
  store.add(join_name(prefix, "weight"), weight_);
  store.add(join_name(prefix, "bias"), bias_);
}

// ---------------------------------------------------------------- ConvTranspose2d

ConvTranspose2d::ConvTranspose2d(const ConvTranspose2dSpec& spec, InitRng& rng) : spec_(spec) {
  spec_.validate();
  const Shape ws = spec_.weight_shape();
  weight_ = rng.kaiming_uniform(ws, ws[1] * ws[2] * ws[3]);
  if (spec_.bias) bias_ = zero_param(Shape{spec_.out_channels});
}

Tensor ConvTranspose2d::forward(const Tensor& x) {
  return conv_transpose2d(x, weight_, bias_, spec_);
}

Shape ConvTranspose2d::trace(const Shape& in, CostReport& report,
                             const std::string& prefix) const {
  if (in.rank() != 4 || in[1] != spec_.in_channels) {
    throw ShapeError("conv_transpose2d: input " + in.to_string() + " channel mismatch");
  }
  const auto [oh, ow] = spec_.output_extent(in[2], in[3]);
  const Shape out{in[0], spec_.out_channels, oh, ow};
  const Shape ws = spec_.weight_shape();
  std::uint64_t flops = static_cast<std::uint64_t>(in.numel() * ws[1] * ws[2] * ws[3]);
  std::uint64_t params = static_cast<std::uint64_t>(ws.numel());
  if (spec_.bias) {
    flops += static_cast<std::uint64_t>(out.numel());
    params += static_cast<std::uint64_t>(spec_.out_channels);
  }
  report.add(prefix, params, flops, out);
  return out;
}

void ConvTranspose2d::collect(const std::string& prefix, ParamStore& store) const {
  store.add(join_name(prefix, "weight"), weight_);
  store.add(join_name(prefix, "bias"), bias_);
}

// ---------------------------------------------------------------- BatchNorm2d

BatchNorm2d::BatchNorm2d(std::int64_t channels, double eps, double momentum)
    : state_(BatchNormState::create(channels)) {
  state_.eps = eps;
  state_.momentum = momentum;
}

Tensor BatchNorm2d::forward(const Tensor& x) { return batchnorm(x, state_); }

Shape BatchNorm2d::trace(const Shape& in, CostReport& report, const std::string& prefix) const {
  if (in.rank() < 2 || in[1] != state_.gamma.numel()) {
    throw ShapeError("batchnorm: input " + in.to_string() + " channel mismatch");
  }
  report.add(prefix, static_cast<std::uint64_t>(2 * state_.gamma.numel()),
             static_cast<std::uint64_t>(in.numel()), in);
  return in;
}

void BatchNorm2d::collect(const std::string& prefix, ParamStore& store) const {
  store.add(join_name(prefix, "weight"), state_.gamma);
  store.add(join_name(prefix, "bias"), state_.beta);
  store.add(join_name(prefix, "running_mean"), state_.running_mean, ParamKind::buffer);
  store.add(join_name(prefix, "running_var"), state_.running_var, ParamKind::buffer);
}

// ---------------------------------------------------------------- Linear

Linear::Linear(std::int64_t in_features, std::int64_t out_features, bool bias, InitRng& rng)
    : in_features_(in_features), out_features_(out_features) {
  if (in_features < 1 || out_features < 1) throw ShapeError("linear: features must be positive");
  weight_ = rng.kaiming_uniform(Shape{out_features, in_features}, in_features);
  if (bias) bias_ = zero_param(Shape{out_features});
}

Tensor Linear::forward(const Tensor& x) { return linear(x, weight_, bias_); }

Shape Linear::trace(const Shape& in, CostReport& report, const std::string& prefix) const {
  if (in.rank() != 2 || in[1] != in_features_) {
    throw ShapeError("linear: input " + in.to_string() + " does not match " +
                     std::to_string(in_features_) + " features");
  }
  const Shape out{in[0], out_features_};
  std::uint64_t flops = static_cast<std::uint64_t>(in[0] * in_features_ * out_features_);
  std::uint64_t params = static_cast<std::uint64_t>(in_features_ * out_features_);
  if (bias_.defined()) {
    flops += static_cast<std::uint64_t>(out.numel());
    params += static_cast<std::uint64_t>(out_features_);
  }
  report.add(prefix, params, flops, out);
  return out;
}

void Linear::collect(const std::string& prefix, ParamStore& store) const {
  store.add(join_name(prefix, "weight"), weight_);
  store.add(join_name(prefix, "bias"), bias_);
}

}  // namespace sase
