#pragma once

#include <cstdint>
#include <vector>

#include "sase/tensor.hpp"

namespace sase {

class Optimizer {
 public:
  explicit Optimizer(std::vector<Tensor> params) : params_(std::move(params)) {}
  virtual ~Optimizer() = default;

  // Applies one update from the accumulated gradients. Parameters without a
  // gradient are left untouched.
  virtual void step() = 0;
  void zero_grad();
  // L2 norm over every parameter gradient.
  double grad_norm() const;

  const std::vector<Tensor>& params() const { return params_; }

 protected:
  std::vector<Tensor> params_;
};

struct SGDOptions {
  double lr = 0.01;
  double momentum = 0.0;
};

// v = momentum * v + g; p -= lr * v
class SGD : public Optimizer {
 public:
  SGD(std::vector<Tensor> params, const SGDOptions& options);
  void step() override;

 private:
  SGDOptions options_;
  std::vector<std::vector<double>> velocity_;
};

struct AdamOptions {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  // beta1 = 0.5 as used for the GAN generators; classifiers keep 0.9.
  static AdamOptions generator_defaults();
};

// Bias-corrected Adam.
class Adam : public Optimizer {
 public:
  Adam(std::vector<Tensor> params, const AdamOptions& options);
  void step() override;
  std::int64_t steps() const { return t_; }

 private:
  AdamOptions options_;
  std::int64_t t_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

}  // namespace sase
