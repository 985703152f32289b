#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "sase/cost.hpp"
#include "sase/nn.hpp"
#include "sase/tensor.hpp"

namespace sase {

enum class ParamKind : std::uint8_t { trainable = 0, buffer = 1 };

struct NamedTensor {
  std::string name;
  Tensor tensor;
  ParamKind kind = ParamKind::trainable;
};

// Named, ordered collection of a model's tensors. Entries alias the model's
// storage, so updates through the store are seen by the model.
class ParamStore {
 public:
  void add(std::string name, Tensor tensor, ParamKind kind = ParamKind::trainable);

  const std::vector<NamedTensor>& entries() const { return entries_; }
  std::vector<Tensor> trainable() const;
  std::int64_t trainable_count() const;
  std::size_t size() const { return entries_.size(); }

  const NamedTensor* find(const std::string& name) const;
  const NamedTensor& at(const std::string& name) const;

  void zero_grads();
  void set_requires_grad(bool flag);

 private:
  std::vector<NamedTensor> entries_;
};

// Deterministic source of per-tensor seeds for parameter initialisation.
class InitRng {
 public:
  explicit InitRng(std::uint64_t seed) : state_(seed) {}
  std::uint64_t next();

  // Fan-in scaled uniform: U(-sqrt(6/fan_in), sqrt(6/fan_in)).
  Tensor kaiming_uniform(const Shape& shape, std::int64_t fan_in);

 private:
  std::uint64_t state_;
};

class Module {
 public:
  virtual ~Module() = default;
  virtual void collect(const std::string& prefix, ParamStore& store) const = 0;
  virtual void set_training(bool training) { (void)training; }
  ParamStore parameters() const;
};

// Single-input module with an analytic cost model.
class Layer : public Module {
 public:
  virtual Tensor forward(const Tensor& x) = 0;
  // Appends one entry per primitive the forward pass runs on an input of
  // shape `in`; returns the output shape.
  virtual Shape trace(const Shape& in, CostReport& report, const std::string& prefix) const = 0;
};

// Two-input module modulating a target map with a source map.
class SkipModule : public Module {
 public:
  virtual Tensor forward(const Tensor& source, const Tensor& target) = 0;
  virtual void trace(const Shape& source, const Shape& target, CostReport& report,
                     const std::string& prefix) const = 0;
};

// ---------------------------------------------------------------- leaf layers

class Conv2d : public Layer {
 public:
  Conv2d(const Conv2dSpec& spec, InitRng& rng);
  Tensor forward(const Tensor& x) override;
  Shape trace(const Shape& in, CostReport& report, const std::string& prefix) const override;
  void collect(const std::string& prefix, ParamStore& store) const override;

  const Conv2dSpec& spec() const { return spec_; }
  Conv2dSpec& mutable_spec() { return spec_; }
  Tensor& weight() { return weight_; }
  Tensor& bias() { return bias_; }

 private:
  Conv2dSpec spec_;
  Tensor weight_;
  Tensor bias_;
};

class ConvTranspose2d : public Layer {
 public:
  ConvTranspose2d(const ConvTranspose2dSpec& spec, InitRng& rng);
  Tensor forward(const Tensor& x) override;
  Shape trace(const Shape& in, CostReport& report, const std::string& prefix) const override;
  void collect(const std::string& prefix, ParamStore& store) const override;

  Tensor& weight() { return weight_; }
  Tensor& bias() { return bias_; }

 private:
  ConvTranspose2dSpec spec_;
  Tensor weight_;
  Tensor bias_;
};

class BatchNorm2d : public Layer {
 public:
  explicit BatchNorm2d(std::int64_t channels, double eps = 1e-5, double momentum = 0.1);
  Tensor forward(const Tensor& x) override;
  Shape trace(const Shape& in, CostReport& report, const std::string& prefix) const override;
  void collect(const std::string& prefix, ParamStore& store) const override;
  void set_training(bool training) override { state_.training = training; }

  BatchNormState& state() { return state_; }

 private:
  BatchNormState state_;
};

class Linear : public Layer {
 public:
  Linear(std::int64_t in_features, std::int64_t out_features, bool bias, InitRng& rng);
  // x [B, in] -> [B, out]
  Tensor forward(const Tensor& x) override;
  Shape trace(const Shape& in, CostReport& report, const std::string& prefix) const override;
  void collect(const std::string& prefix, ParamStore& store) const override;

  Tensor& weight() { return weight_; }
  Tensor& bias() { return bias_; }

 private:
  std::int64_t in_features_, out_features_;
  Tensor weight_;
  Tensor bias_;
};

// Cost helpers for ops that count one FLOP per output element.
void trace_elementwise(CostReport& report, const std::string& name, const Shape& out);

}  // namespace sase
