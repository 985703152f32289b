#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <vector>

#include "sase/module.hpp"

// Attention mechanisms over [B,C,H,W] feature maps: squeeze-excitation (SE),
// skip-layer excitation (SLE), the two spatially-adaptive SE variants, and
// multi-head self-attention (MHSA).

namespace sase {

// ---------------------------------------------------------------- SE

struct SEConfig {
  std::int64_t channels = 64;
  std::int64_t reduction = 16;

  std::int64_t hidden() const;
  void validate() const;
};

// Y' = alpha * Y with alpha = sigmoid(fc2(relu(fc1(gap(Y))))).
class SqueezeExcitation : public Layer {
 public:
  SqueezeExcitation(const SEConfig& config, InitRng& rng);

  Tensor forward(const Tensor& y) override;
  // alpha: [B,C,1,1]
  Tensor gate(const Tensor& y);
  Shape trace(const Shape& in, CostReport& report, const std::string& prefix) const override;
  // Cost of gate() alone; returns [B,C,1,1].
  Shape trace_gate(const Shape& in, CostReport& report, const std::string& prefix) const;
  void collect(const std::string& prefix, ParamStore& store) const override;

  const SEConfig& config() const { return config_; }
  Linear& fc1() { return fc1_; }
  Linear& fc2() { return fc2_; }

 private:
  SEConfig config_;
  Linear fc1_;
  Linear fc2_;
};

// ---------------------------------------------------------------- SLE

struct SLEConfig {
  std::int64_t source_channels = 64;
  std::int64_t target_channels = 64;
  // Source map is pooled to pool_size x pool_size and reduced by a conv of
  // that kernel size.
  std::int64_t pool_size = 4;
  double leaky_slope = 0.1;
  // Width of the hidden layer; 0 means target_channels.
  std::int64_t hidden = 0;
  bool bias = false;

  std::int64_t hidden_width() const { return hidden > 0 ? hidden : target_channels; }
  void validate() const;
};

// Y' = beta * Y with beta = sigmoid(conv1x1(lrelu(conv_k(pool_k(X))))).
class SkipLayerExcitation : public SkipModule {
 public:
  SkipLayerExcitation(const SLEConfig& config, InitRng& rng);

  Tensor forward(const Tensor& source, const Tensor& target) override;
  // beta: [B,C_Y,1,1]
  Tensor gate(const Tensor& source);
  void trace(const Shape& source, const Shape& target, CostReport& report,
             const std::string& prefix) const override;
  void collect(const std::string& prefix, ParamStore& store) const override;

  Conv2d& conv_reduce() { return reduce_; }
  Conv2d& conv_expand() { return expand_; }

 private:
  SLEConfig config_;
  Conv2d reduce_;
  Conv2d expand_;
};

// Reshapes SE excitation weights into an SLE built with
// {pool_size 1, leaky_slope 0, bias true, hidden C/r}; with X = Y the two
// modules then compute the same function.
void match_sle_to_se(SqueezeExcitation& se, SkipLayerExcitation& sle);

// ---------------------------------------------------------------- SASE (synthesis)

struct SASESynthConfig {
  std::int64_t heads = 4;
  std::int64_t source_channels = 256;
  std::int64_t target_channels = 128;
  // Channel (query) branch: pool -> conv pool_size x pool_size -> lrelu ->
  // conv1x1 -> sigmoid, hidden width target_channels / channel_reduction.
  std::int64_t channel_reduction = 4;
  std::int64_t pool_size = 4;
  double leaky_slope = 0.1;
  // Spatial (key) branch: conv3x3 -> lrelu -> conv3x3 to one channel, width
  // source_channels / (heads * spatial_reduction), then sigmoid and a
  // bilinear resize to the target extent.
  std::int64_t spatial_reduction = 4;
  std::int64_t dilation = 1;
  double epsilon = 1e-6;
  // Gaussian noise added to the key logits before the sigmoid.
  double noise_std = 0.0;
  std::optional<std::uint64_t> noise_seed;

  std::int64_t head_channels() const { return source_channels / heads; }
  std::int64_t query_hidden() const;
  std::int64_t key_hidden() const;
  void validate() const;
};

// Dilation of the key branch for a given source resolution: 2, 2, 4 at 8,
// 16 and 32; 1 elsewhere.
std::int64_t sase_dilation_for_source(std::int64_t source_resolution);

// Noise on the key masks: unit variance for 1024 px models, none below.
double sase_noise_for_resolution(std::int64_t image_resolution);

struct SASESynthResult {
  Tensor output;                 // W * Y
  Tensor weight;                 // W: [B,C_Y,H_Y,W_Y]
  std::vector<Tensor> queries;   // g x [B,C_Y,1,1]
  std::vector<Tensor> keys;      // g x [B,1,H_Y,W_Y]
};

// W = sum_i(Q_i * K_i) / (sum_i K_i + eps), broadcasting [B,C,1,1] queries
// against [B,1,H,W] keys. eps = 0 requires a nonzero key sum.
Tensor combine_heads(const std::vector<Tensor>& queries, const std::vector<Tensor>& keys,
                     double eps);

class SASESynth : public SkipModule {
 public:
  SASESynth(const SASESynthConfig& config, InitRng& rng);

  Tensor forward(const Tensor& source, const Tensor& target) override;
  SASESynthResult forward_full(const Tensor& source, const Tensor& target);
  void trace(const Shape& source, const Shape& target, CostReport& report,
             const std::string& prefix) const override;
  void collect(const std::string& prefix, ParamStore& store) const override;

  const SASESynthConfig& config() const { return config_; }
  SASESynthConfig& mutable_config() { return config_; }

  struct Head {
    Conv2d query_reduce;
    Conv2d query_expand;
    Conv2d key_reduce;
    Conv2d key_out;
  };
  std::vector<Head>& heads() { return heads_; }

 private:
  SASESynthConfig config_;
  std::vector<Head> heads_;
};

// ---------------------------------------------------------------- SASE (recognition)

struct SASERecogConfig {
  std::int64_t channels = 64;
  std::int64_t heads = 4;
  // Reduction inside the per-head SE query.
  std::int64_t query_reduction = 4;
  // Hidden width of the key branch is head_dim / key_reduction.
  std::int64_t key_reduction = 4;
  std::int64_t stride = 1;
  PaddingMode padding_mode = PaddingMode::zeros;

  std::int64_t head_dim() const { return channels / heads; }
  std::int64_t key_hidden() const;
  void validate() const;
};

struct SASERecogResult {
  Tensor output;                    // concat_i(A_i * V_i)
  std::vector<Tensor> queries;      // g x [B,d,1,1]
  std::vector<Tensor> keys;         // g x [B,d,H',W']
  std::vector<Tensor> values;       // g x [B,d,H',W']
  std::vector<Tensor> attention;    // g x [B,d,H',W'], softmax over d
};

// Per head: Q = SE(X_i), K = conv3x3(relu(bn(conv3x3(X_i)))), V = conv3x3(X_i),
// A = softmax_channels(Q * K), output = concat(A * V). With stride 2 the
// value conv is strided and Q/K read a 2x2 average-pooled input.
class SASERecog : public Layer {
 public:
  SASERecog(const SASERecogConfig& config, InitRng& rng);

  Tensor forward(const Tensor& x) override;
  SASERecogResult forward_full(const Tensor& x);
  Shape trace(const Shape& in, CostReport& report, const std::string& prefix) const override;
  void collect(const std::string& prefix, ParamStore& store) const override;
  void set_training(bool training) override;

  const SASERecogConfig& config() const { return config_; }

  struct Head {
    SqueezeExcitation query;
    Conv2d key_reduce;
    BatchNorm2d key_bn;
    Conv2d key_out;
    Conv2d value;
  };
  std::vector<Head>& heads() { return heads_; }

 private:
  SASERecogConfig config_;
  std::vector<Head> heads_;
};

// ---------------------------------------------------------------- MHSA

struct MHSAConfig {
  std::int64_t channels = 64;
  std::int64_t heads = 4;

  std::int64_t head_dim() const { return channels / heads; }
  void validate() const;
};

// Tokens N = H*W; per head softmax(Q K^T / sqrt(d)) V with c x c projections
// and no positional encoding.
class MultiHeadSelfAttention : public Layer {
 public:
  MultiHeadSelfAttention(const MHSAConfig& config, InitRng& rng);

  Tensor forward(const Tensor& x) override;
  Shape trace(const Shape& in, CostReport& report, const std::string& prefix) const override;
  void collect(const std::string& prefix, ParamStore& store) const override;

  const MHSAConfig& config() const { return config_; }
  // [c, c] projection matrices (out, in).
  Tensor& wq() { return wq_; }
  Tensor& wk() { return wk_; }
  Tensor& wv() { return wv_; }

 private:
  MHSAConfig config_;
  Tensor wq_, wk_, wv_;
};

// Explicit pairwise loops over tokens; forward only.
Tensor mhsa_naive_oracle(const Tensor& x, const Tensor& wq, const Tensor& wk, const Tensor& wv,
                         std::int64_t heads);

}  // namespace sase
