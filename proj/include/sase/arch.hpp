#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "sase/attention.hpp"
#include "sase/module.hpp"

namespace sase {

// ---------------------------------------------------------------- bottleneck

enum class BlockVariant { vanilla, se, mhsa, sase };

std::string to_string(BlockVariant variant);
BlockVariant parse_block_variant(const std::string& name);

struct BlockSpec {
  BlockVariant variant = BlockVariant::vanilla;
  std::int64_t in_channels = 256;
  // Output channels C; the inner width is C / bottleneck_ratio.
  std::int64_t channels = 256;
  std::int64_t bottleneck_ratio = 4;
  std::int64_t stride = 1;
  // Projection shortcut; when unset, used iff channels or stride change.
  std::optional<bool> projection;

  std::int64_t se_reduction = 16;
  std::int64_t heads = 4;
  std::int64_t query_reduction = 4;
  std::int64_t key_reduction = 4;
  PaddingMode padding_mode = PaddingMode::zeros;

  std::int64_t width() const { return channels / bottleneck_ratio; }
  bool uses_projection() const;
  void validate() const;
};

// conv1x1-BN-ReLU, core, BN-ReLU, conv1x1-BN, optional SE, residual add,
// ReLU. The core is a 3x3 conv (vanilla, se), MHSA followed by a 2x2 average
// pool when strided (mhsa), or SASE-recognition (sase).
class Bottleneck : public Layer {
 public:
  Bottleneck(const BlockSpec& spec, InitRng& rng);

  Tensor forward(const Tensor& x) override;
  Shape trace(const Shape& in, CostReport& report, const std::string& prefix) const override;
  void collect(const std::string& prefix, ParamStore& store) const override;
  void set_training(bool training) override;

  const BlockSpec& spec() const { return spec_; }
  Conv2d& reduce() { return reduce_; }
  Conv2d& expand() { return expand_; }
  BatchNorm2d& expand_bn() { return bn3_; }
  Layer& core() { return *core_; }

 private:
  BlockSpec spec_;
  Conv2d reduce_;
  BatchNorm2d bn1_;
  std::unique_ptr<Layer> core_;
  BatchNorm2d bn2_;
  Conv2d expand_;
  BatchNorm2d bn3_;
  std::unique_ptr<SqueezeExcitation> se_;
  std::unique_ptr<Conv2d> proj_;
  std::unique_ptr<BatchNorm2d> proj_bn_;
};

// ---------------------------------------------------------------- ResNet

struct ResNetSpec {
  BlockVariant variant = BlockVariant::vanilla;
  std::vector<std::int64_t> depths{3, 4, 6, 3};
  // Output channels of each stage.
  std::vector<std::int64_t> widths{256, 512, 1024, 2048};
  // Stride of the first block of each stage.
  std::vector<std::int64_t> strides{1, 2, 2, 2};
  std::int64_t bottleneck_ratio = 4;
  std::int64_t in_channels = 3;
  std::int64_t stem_channels = 64;
  std::int64_t stem_kernel = 7;
  std::int64_t stem_stride = 2;
  bool stem_pool = true;
  // Head: adaptive average pool to head_pool x head_pool, flatten, linear.
  std::int64_t head_pool = 1;
  std::int64_t num_classes = 1000;

  std::int64_t se_reduction = 16;
  std::int64_t heads = 4;
  std::int64_t query_reduction = 4;
  std::int64_t key_reduction = 4;
  // Stages (0-based) whose blocks use MHSA when variant == mhsa.
  std::vector<std::int64_t> mhsa_stages{3};

  static ResNetSpec resnet50(BlockVariant variant);
  void validate() const;
};

class ResNet : public Layer {
 public:
  ResNet(const ResNetSpec& spec, InitRng& rng);

  // [B, in_channels, H, W] -> logits [B, num_classes]
  Tensor forward(const Tensor& x) override;
  Shape trace(const Shape& in, CostReport& report, const std::string& prefix) const override;
  void collect(const std::string& prefix, ParamStore& store) const override;
  void set_training(bool training) override;

  const ResNetSpec& spec() const { return spec_; }
  std::vector<Bottleneck>& blocks() { return blocks_; }

 private:
  ResNetSpec spec_;
  Conv2d stem_;
  BatchNorm2d stem_bn_;
  std::vector<Bottleneck> blocks_;
  Linear head_;
};

// ---------------------------------------------------------------- generator

enum class SkipKind { none, sle, sase };

std::string to_string(SkipKind kind);
SkipKind parse_skip_kind(const std::string& name);

struct GeneratorSpec {
  std::int64_t latent_dim = 256;
  std::int64_t resolution = 256;
  std::int64_t ngf = 64;
  std::int64_t out_channels = 3;
  // Width of the 4x4 ... resolution stages; empty means the FastGAN
  // schedule ngf * {16, 8, 4, 2, 2, 1, 0.5, 0.25, 0.125}.
  std::vector<std::int64_t> widths;
  SkipKind skip_kind = SkipKind::sle;
  // (source, target) resolutions; unset means the pairs (8,128), (16,256),
  // (32,512) that fit within the resolution.
  std::optional<std::vector<std::pair<std::int64_t, std::int64_t>>> skip_pairs;

  std::int64_t sase_heads = 4;
  std::int64_t sase_channel_reduction = 4;
  std::int64_t sase_spatial_reduction = 4;
  // Noise on SASE key logits; unset means unit variance at 1024 px, else 0.
  std::optional<double> mask_noise_std;
  // Noise injected after the convs of composite blocks.
  double block_noise_std = 0.0;
  std::optional<std::uint64_t> noise_seed;

  static std::vector<std::int64_t> fastgan_widths(std::int64_t ngf, std::int64_t resolution);
  static std::vector<std::pair<std::int64_t, std::int64_t>> fastgan_skip_pairs(
      std::int64_t resolution);

  std::vector<std::int64_t> stage_resolutions() const;
  std::vector<std::int64_t> stage_widths() const;
  std::vector<std::pair<std::int64_t, std::int64_t>> resolved_skip_pairs() const;
  void validate() const;
};

// Upsample x2 (nearest), conv3x3 to 2*out, [noise], BN, GLU; composite blocks
// repeat conv/noise/BN/GLU once more at the output width.
class UpBlock : public Layer {
 public:
  UpBlock(std::int64_t in, std::int64_t out, bool composite, double noise_std,
          std::uint64_t noise_seed, InitRng& rng);

  Tensor forward(const Tensor& x) override;
  Shape trace(const Shape& in, CostReport& report, const std::string& prefix) const override;
  void collect(const std::string& prefix, ParamStore& store) const override;
  void set_training(bool training) override;

  bool composite() const { return composite_; }

 private:
  bool composite_;
  double noise_std_;
  std::uint64_t noise_seed_;
  std::vector<Conv2d> convs_;
  std::vector<BatchNorm2d> bns_;
};

struct SkipMasks {
  std::int64_t source_resolution = 0;
  std::int64_t target_resolution = 0;
  std::vector<Tensor> keys;  // g x [B,1,target,target]
};

struct GeneratorResult {
  Tensor image;  // [B, out_channels, S, S]
  std::vector<SkipMasks> masks;
};

class Generator : public Module {
 public:
  Generator(const GeneratorSpec& spec, InitRng& rng);

  // z: [latent] or [B, latent]
  Tensor forward(const Tensor& z);
  GeneratorResult forward_full(const Tensor& z);
  // Reports entries under "init", "stage<res>", "skip<src>_<dst>" and "to_image".
  void trace(std::int64_t batch, CostReport& report, const std::string& prefix) const;
  void collect(const std::string& prefix, ParamStore& store) const override;
  void set_training(bool training) override;

  const GeneratorSpec& spec() const { return spec_; }
  Conv2d& to_image() { return to_image_; }

 private:
  struct Skip {
    std::int64_t source;
    std::int64_t target;
    std::unique_ptr<SkipModule> module;
  };

  GeneratorSpec spec_;
  std::vector<std::int64_t> resolutions_;
  std::vector<std::int64_t> widths_;
  ConvTranspose2d init_;
  BatchNorm2d init_bn_;
  std::vector<UpBlock> blocks_;  // blocks_[i] produces resolutions_[i + 1]
  std::vector<Skip> skips_;
  Conv2d to_image_;
};

}  // namespace sase
