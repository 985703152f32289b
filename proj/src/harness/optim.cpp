#include "sase/optim.hpp"

#include <cmath>

#include "sase/error.hpp"

namespace sase {

namespace {

void require_leaves(const std::vector<Tensor>& params) {
  for (const auto& p : params) {
    if (!p.defined() || !p.is_leaf()) throw ConfigError("optimizer parameters must be leaves");
  }
}

std::vector<std::vector<double>> zeros_like(const std::vector<Tensor>& params) {
  std::vector<std::vector<double>> out;
  for (const auto& p : params) out.emplace_back(static_cast<std::size_t>(p.numel()), 0.0);
  return out;
}

void round_f32(std::span<double> w) {
  for (double& x : w) x = static_cast<float>(x);
}

}  // namespace

void Optimizer::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

double Optimizer::grad_norm() const {
  double sq = 0.0;
  for (const auto& p : params_) {
    if (!p.has_grad()) continue;
    for (double g : p.grad()) sq += g * g;
  }
  return std::sqrt(sq);
}

SGD::SGD(std::vector<Tensor> params, const SGDOptions& options)
    : Optimizer(std::move(params)), options_(options) {
  require_leaves(params_);
  if (options_.lr < 0.0 || options_.momentum < 0.0 || options_.momentum >= 1.0) {
    throw ConfigError("sgd: need lr >= 0 and momentum in [0, 1)");
  }
  velocity_ = zeros_like(params_);
}

void SGD::step() {
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Tensor& p = params_[i];
    if (!p.has_grad()) continue;
    auto g = p.grad();
    auto w = p.mutable_data();
    auto& v = velocity_[i];
    for (std::size_t j = 0; j < w.size(); ++j) {
      v[j] = options_.momentum * v[j] + g[j];
      w[j] -= options_.lr * v[j];
    }
    if (p.dtype() == DType::f32) round_f32(w);
  }
}

AdamOptions AdamOptions::generator_defaults() {
  AdamOptions o;
  o.lr = 2e-4;
  o.beta1 = 0.5;
  o.beta2 = 0.999;
  return o;
}

Adam::Adam(std::vector<Tensor> params, const AdamOptions& options)
    : Optimizer(std::move(params)), options_(options) {
  require_leaves(params_);
  const auto& o = options_;
  if (o.lr < 0.0 || o.beta1 < 0.0 || o.beta1 >= 1.0 || o.beta2 < 0.0 || o.beta2 >= 1.0 ||
      o.eps <= 0.0) {
    throw ConfigError("adam: need lr >= 0, betas in [0, 1) and eps > 0");
  }
  m_ = zeros_like(params_);
  v_ = zeros_like(params_);
}

void Adam::step() {
  ++t_;
  const double c1 = 1.0 - std::pow(options_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(options_.beta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Tensor& p = params_[i];
    if (!p.has_grad()) continue;
    auto g = p.grad();
    auto w = p.mutable_data();
    auto& m = m_[i];
    auto& v = v_[i];
    for (std::size_t j = 0; j < w.size(); ++j) {
      m[j] = options_.beta1 * m[j] + (1.0 - options_.beta1) * g[j];
      v[j] = options_.beta2 * v[j] + (1.0 - options_.beta2) * g[j] * g[j];
      const double mhat = m[j] / c1;
      const double vhat = v[j] / c2;
      w[j] -= options_.lr * mhat / (std::sqrt(vhat) + options_.eps);
    }
    if (p.dtype() == DType::f32) round_f32(w);
  }
}

}  // namespace sase
