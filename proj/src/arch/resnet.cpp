#include <algorithm>

#include "sase/arch.hpp"
#include "sase/error.hpp"
#include "sase/ops.hpp"

namespace sase {

std::string to_string(BlockVariant variant) {
  switch (variant) {
    case BlockVariant::vanilla:
      return "vanilla";
    case BlockVariant::se:
      return "se";
    case BlockVariant::mhsa:
      return "mhsa";
    case BlockVariant::sase:
      return "sase";
  }
  return "unknown";
}

BlockVariant parse_block_variant(const std::string& name) {
  for (auto v : {BlockVariant::vanilla, BlockVariant::se, BlockVariant::mhsa, BlockVariant::sase}) {
    if (to_string(v) == name) return v;
  }
  throw ConfigError("unknown block variant '" + name + "' (expected vanilla, se, mhsa or sase)");
}

// ---------------------------------------------------------------- Bottleneck

bool BlockSpec::uses_projection() const {
  if (projection) return *projection;
  return in_channels != channels || stride != 1;
}

void BlockSpec::validate() const {
  if (in_channels < 1 || channels < 1 || bottleneck_ratio < 1) {
    throw ConfigError("bottleneck: channels and ratio must be positive");
  }
  if (channels % bottleneck_ratio != 0) {
    throw ConfigError("bottleneck: channels " + std::to_string(channels) +
                      " not divisible by ratio " + std::to_string(bottleneck_ratio));
  }
  if (stride != 1 && stride != 2) throw ConfigError("bottleneck: stride must be 1 or 2");
  if (!uses_projection() && (in_channels != channels || stride != 1)) {
    throw ConfigError("bottleneck: identity shortcut needs matching channels and stride 1");
  }
}

namespace {

const BlockSpec& validated(const BlockSpec& s) {
  s.validate();
  return s;
}

Conv2dSpec pointwise(std::int64_t in, std::int64_t out, std::int64_t stride = 1) {
  Conv2dSpec s;
  s.in_channels = in;
  s.out_channels = out;
  s.kernel = {1, 1};
  s.stride = {stride, stride};
  return s;
}

std::unique_ptr<Layer> make_core(const BlockSpec& s, InitRng& rng) {
  const std::int64_t w = s.width();
  switch (s.variant) {
    case BlockVariant::vanilla:
    case BlockVariant::se: {
      Conv2dSpec c = Conv2dSpec::same(w, w, 3, 1, s.stride);
      c.padding_mode = s.padding_mode;
      return std::make_unique<Conv2d>(c, rng);
    }
    case BlockVariant::mhsa:
      return std::make_unique<MultiHeadSelfAttention>(MHSAConfig{w, s.heads}, rng);
    case BlockVariant::sase: {
      SASERecogConfig c;
      c.channels = w;
      c.heads = s.heads;
      c.query_reduction = s.query_reduction;
      c.key_reduction = s.key_reduction;
      c.stride = s.stride;
      c.padding_mode = s.padding_mode;
      return std::make_unique<SASERecog>(c, rng);
    }
  }
  throw ConfigError("bottleneck: unknown variant");
}

}  // namespace

Bottleneck::Bottleneck(const BlockSpec& spec, InitRng& rng)
    : spec_(validated(spec)),
      reduce_(pointwise(spec.in_channels, spec.width()), rng),
      bn1_(spec.width()),
      core_(make_core(spec, rng)),
      bn2_(spec.width()),
      expand_(pointwise(spec.width(), spec.channels), rng),
      bn3_(spec.channels) {
  if (spec_.variant == BlockVariant::se) {
    se_ = std::make_unique<SqueezeExcitation>(SEConfig{spec_.channels, spec_.se_reduction}, rng);
  }
  if (spec_.uses_projection()) {
    proj_ = std::make_unique<Conv2d>(pointwise(spec_.in_channels, spec_.channels, spec_.stride),
                                     rng);
    proj_bn_ = std::make_unique<BatchNorm2d>(spec_.channels);
  }
}

Tensor Bottleneck::forward(const Tensor& x) {
  Tensor h = relu(bn1_.forward(reduce_.forward(x)));
  h = core_->forward(h);
  if (spec_.variant == BlockVariant::mhsa && spec_.stride == 2) h = avg_pool2d(h, 2, 2);
  h = relu(bn2_.forward(h));
  h = bn3_.forward(expand_.forward(h));
  if (se_) h = se_->forward(h);
  const Tensor shortcut = proj_ ? proj_bn_->forward(proj_->forward(x)) : x;
  return relu(add(h, shortcut));
}

Shape Bottleneck::trace(const Shape& in, CostReport& report, const std::string& prefix) const {
  Shape h = reduce_.trace(in, report, join_name(prefix, "conv1"));
  bn1_.trace(h, report, join_name(prefix, "bn1"));
  trace_elementwise(report, join_name(prefix, "relu1"), h);
  h = core_->trace(h, report, join_name(prefix, "core"));
  if (spec_.variant == BlockVariant::mhsa && spec_.stride == 2) {
    h = Shape{h[0], h[1], h[2] / 2, h[3] / 2};
    trace_elementwise(report, join_name(prefix, "core_pool"), h);
  }
  bn2_.trace(h, report, join_name(prefix, "bn2"));
  trace_elementwise(report, join_name(prefix, "relu2"), h);
  h = expand_.trace(h, report, join_name(prefix, "conv3"));
  bn3_.trace(h, report, join_name(prefix, "bn3"));
  if (se_) se_->trace(h, report, join_name(prefix, "se"));
  if (proj_) {
    const Shape s = proj_->trace(in, report, join_name(prefix, "shortcut.conv"));
    proj_bn_->trace(s, report, join_name(prefix, "shortcut.bn"));
  }
  trace_elementwise(report, join_name(prefix, "add"), h);
  trace_elementwise(report, join_name(prefix, "relu3"), h);
  return h;
}

void Bottleneck::collect(const std::string& prefix, ParamStore& store) const {
  reduce_.collect(join_name(prefix, "conv1"), store);
  bn1_.collect(join_name(prefix, "bn1"), store);
  core_->collect(join_name(prefix, "core"), store);
  bn2_.collect(join_name(prefix, "bn2"), store);
  expand_.collect(join_name(prefix, "conv3"), store);
  bn3_.collect(join_name(prefix, "bn3"), store);
  if (se_) se_->collect(join_name(prefix, "se"), store);
  if (proj_) {
    proj_->collect(join_name(prefix, "shortcut.conv"), store);
    proj_bn_->collect(join_name(prefix, "shortcut.bn"), store);
  }
}

void Bottleneck::set_training(bool training) {
  bn1_.set_training(training);
  core_->set_training(training);
  bn2_.set_training(training);
  bn3_.set_training(training);
  if (proj_bn_) proj_bn_->set_training(training);
}

// ---------------------------------------------------------------- ResNet

ResNetSpec ResNetSpec::resnet50(BlockVariant variant) {
  ResNetSpec s;
  s.variant = variant;
  return s;
}

void ResNetSpec::validate() const {
  if (depths.empty() || depths.size() != widths.size() || depths.size() != strides.size()) {
    throw ConfigError("resnet: depths, widths and strides must have the same nonzero length");
  }
  for (std::size_t i = 0; i < depths.size(); ++i) {
    if (depths[i] < 1 || widths[i] < 1 || (strides[i] != 1 && strides[i] != 2)) {
      throw ConfigError("resnet: stage " + std::to_string(i) + " has an invalid depth/width/stride");
    }
  }
  if (in_channels < 1 || stem_channels < 1 || stem_kernel < 1 || stem_stride < 1 ||
      head_pool < 1 || num_classes < 1) {
    throw ConfigError("resnet: stem and head settings must be positive");
  }
}

namespace {

const ResNetSpec& validated(const ResNetSpec& s) {
  s.validate();
  return s;
}

Conv2dSpec stem_spec(const ResNetSpec& s) {
  Conv2dSpec c = Conv2dSpec::same(s.in_channels, s.stem_channels, s.stem_kernel, 1, s.stem_stride);
  return c;
}

std::string block_name(const std::string& prefix, std::size_t stage, std::int64_t index) {
  return join_name(prefix, "layer" + std::to_string(stage + 1) + "." + std::to_string(index));
}

}  // namespace

ResNet::ResNet(const ResNetSpec& spec, InitRng& rng)
    : spec_(validated(spec)),
      stem_(stem_spec(spec), rng),
      stem_bn_(spec.stem_channels),
      head_(spec.widths.back() * spec.head_pool * spec.head_pool, spec.num_classes, true, rng) {
  std::int64_t in = spec_.stem_channels;
  for (std::size_t stage = 0; stage < spec_.depths.size(); ++stage) {
    const bool mhsa_stage = std::find(spec_.mhsa_stages.begin(), spec_.mhsa_stages.end(),
                                      static_cast<std::int64_t>(stage)) != spec_.mhsa_stages.end();
    for (std::int64_t i = 0; i < spec_.depths[stage]; ++i) {
      BlockSpec b;
      b.variant = spec_.variant == BlockVariant::mhsa && !mhsa_stage ? BlockVariant::vanilla
                                                                      : spec_.variant;
      b.in_channels = in;
      b.channels = spec_.widths[stage];
      b.bottleneck_ratio = spec_.bottleneck_ratio;
      b.stride = i == 0 ? spec_.strides[stage] : 1;
      b.se_reduction = spec_.se_reduction;
      b.heads = spec_.heads;
      b.query_reduction = spec_.query_reduction;
      b.key_reduction = spec_.key_reduction;
      blocks_.emplace_back(b, rng);
      in = b.channels;
    }
  }
}

Tensor ResNet::forward(const Tensor& x) {
  Tensor h = relu(stem_bn_.forward(stem_.forward(x)));
  if (spec_.stem_pool) h = max_pool2d(h, 3, 2, 1);
  for (auto& b : blocks_) h = b.forward(h);
  h = spec_.head_pool == 1 ? global_avg_pool(h) : adaptive_avg_pool(h, spec_.head_pool, spec_.head_pool);
  h = reshape(h, Shape{h.dim(0), h.numel() / h.dim(0)});
  return head_.forward(h);
}

Shape ResNet::trace(const Shape& in, CostReport& report, const std::string& prefix) const {
  Shape h = stem_.trace(in, report, join_name(prefix, "stem.conv"));
  stem_bn_.trace(h, report, join_name(prefix, "stem.bn"));
  trace_elementwise(report, join_name(prefix, "stem.relu"), h);
  if (spec_.stem_pool) {
    h = Shape{h[0], h[1], (h[2] - 1) / 2 + 1, (h[3] - 1) / 2 + 1};
    trace_elementwise(report, join_name(prefix, "stem.pool"), h);
  }
  std::size_t index = 0;
  for (std::size_t stage = 0; stage < spec_.depths.size(); ++stage) {
    for (std::int64_t i = 0; i < spec_.depths[stage]; ++i) {
      h = blocks_[index++].trace(h, report, block_name(prefix, stage, i));
    }
  }
  const Shape pooled{h[0], h[1], spec_.head_pool, spec_.head_pool};
  if (h[2] < spec_.head_pool || h[3] < spec_.head_pool) {
    throw ShapeError("resnet: final feature map " + h.to_string() + " smaller than head pool");
  }
  trace_elementwise(report, join_name(prefix, "head.pool"), pooled);
  return head_.trace(Shape{h[0], pooled.numel() / h[0]}, report, join_name(prefix, "head.fc"));
}

void ResNet::collect(const std::string& prefix, ParamStore& store) const {
  stem_.collect(join_name(prefix, "stem.conv"), store);
  stem_bn_.collect(join_name(prefix, "stem.bn"), store);
  std::size_t index = 0;
  for (std::size_t stage = 0; stage < spec_.depths.size(); ++stage) {
    for (std::int64_t i = 0; i < spec_.depths[stage]; ++i) {
      blocks_[index++].collect(block_name(prefix, stage, i), store);
    }
  }
  head_.collect(join_name(prefix, "head.fc"), store);
}

void ResNet::set_training(bool training) {
  stem_bn_.set_training(training);
  for (auto& b : blocks_) b.set_training(training);
}

}  // namespace sase
