#include <algorithm>
#include <bit>
#include <cmath>

#include "sase/arch.hpp"
#include "sase/error.hpp"
#include "sase/ops.hpp"

namespace sase {

std::string to_string(SkipKind kind) {
  switch (kind) {
    case SkipKind::none:
      return "none";
    case SkipKind::sle:
      return "sle";
    case SkipKind::sase:
      return "sase";
  }
  return "unknown";
}

SkipKind parse_skip_kind(const std::string& name) {
  for (auto k : {SkipKind::none, SkipKind::sle, SkipKind::sase}) {
    if (to_string(k) == name) return k;
  }
  throw ConfigError("unknown skip kind '" + name + "' (expected none, sle or sase)");
}

namespace {

bool power_of_two(std::int64_t v) { return v > 0 && (v & (v - 1)) == 0; }

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ull * (salt + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

}  // namespace

// ---------------------------------------------------------------- spec

std::vector<std::int64_t> GeneratorSpec::fastgan_widths(std::int64_t ngf,
                                                        std::int64_t resolution) {
  std::vector<std::int64_t> widths;
  double mult = 16.0;
  for (std::int64_t r = 4; r <= resolution; r *= 2) {
    widths.push_back(std::max<std::int64_t>(1, static_cast<std::int64_t>(mult * ngf)));
    // 16, 8, 4, 2, 2, 1, 0.5, ...: the 32 -> 64 step keeps the width.
    if (r != 32) mult /= 2.0;
  }
  return widths;
}

std::vector<std::pair<std::int64_t, std::int64_t>> GeneratorSpec::fastgan_skip_pairs(
    std::int64_t resolution) {
  std::vector<std::pair<std::int64_t, std::int64_t>> pairs;
  for (auto p : {std::pair<std::int64_t, std::int64_t>{8, 128}, {16, 256}, {32, 512}}) {
    if (p.second <= resolution) pairs.push_back(p);
  }
  return pairs;
}

std::vector<std::int64_t> GeneratorSpec::stage_resolutions() const {
  std::vector<std::int64_t> r;
  for (std::int64_t s = 4; s <= resolution; s *= 2) r.push_back(s);
  return r;
}

std::vector<std::int64_t> GeneratorSpec::stage_widths() const {
  return widths.empty() ? fastgan_widths(ngf, resolution) : widths;
}

std::vector<std::pair<std::int64_t, std::int64_t>> GeneratorSpec::resolved_skip_pairs() const {
  if (skip_kind == SkipKind::none) return {};
  return skip_pairs ? *skip_pairs : fastgan_skip_pairs(resolution);
}

void GeneratorSpec::validate() const {
  if (latent_dim < 1 || ngf < 1 || out_channels < 1) {
    throw ConfigError("generator: latent_dim, ngf and out_channels must be positive");
  }
  if (resolution < 8 || !power_of_two(resolution)) {
    throw ConfigError("generator: resolution must be a power of two >= 8, got " +
                      std::to_string(resolution));
  }
  const auto res = stage_resolutions();
  if (!widths.empty() && widths.size() != res.size()) {
    throw ConfigError("generator: expected " + std::to_string(res.size()) +
                      " stage widths (4.." + std::to_string(resolution) + ")");
  }
  for (auto w : stage_widths()) {
    if (w < 1) throw ConfigError("generator: stage widths must be positive");
  }
  for (auto [src, dst] : resolved_skip_pairs()) {
    if (!power_of_two(src) || !power_of_two(dst) || src < 4 || dst > resolution) {
      throw ConfigError("generator: skip pair (" + std::to_string(src) + "," +
                        std::to_string(dst) + ") is not a pair of stage resolutions");
    }
    if (src >= dst) {
      throw ConfigError("generator: skip source " + std::to_string(src) +
                        " must be below its target " + std::to_string(dst));
    }
  }
  if (block_noise_std < 0.0 || (mask_noise_std && *mask_noise_std < 0.0)) {
    throw ConfigError("generator: noise std must be >= 0");
  }
}

// ---------------------------------------------------------------- UpBlock

UpBlock::UpBlock(std::int64_t in, std::int64_t out, bool composite, double noise_std,
                 std::uint64_t noise_seed, InitRng& rng)
    : composite_(composite), noise_std_(noise_std), noise_seed_(noise_seed) {
  convs_.emplace_back(Conv2dSpec::same(in, 2 * out, 3), rng);
  bns_.emplace_back(2 * out);
  if (composite_) {
    convs_.emplace_back(Conv2dSpec::same(out, 2 * out, 3), rng);
    bns_.emplace_back(2 * out);
  }
}

Tensor UpBlock::forward(const Tensor& x) {
  Tensor h = upsample_nearest(x, 2);
  for (std::size_t i = 0; i < convs_.size(); ++i) {
    h = convs_[i].forward(h);
    if (composite_ && noise_std_ > 0.0) h = inject_noise(h, mix_seed(noise_seed_, i), noise_std_);
    h = glu(bns_[i].forward(h));
  }
  return h;
}

Shape UpBlock::trace(const Shape& in, CostReport& report, const std::string& prefix) const {
  Shape h{in[0], in[1], in[2] * 2, in[3] * 2};
  trace_elementwise(report, join_name(prefix, "upsample"), h);
  for (std::size_t i = 0; i < convs_.size(); ++i) {
    const std::string n = std::to_string(i + 1);
    h = convs_[i].trace(h, report, join_name(prefix, "conv" + n));
    if (composite_ && noise_std_ > 0.0) trace_elementwise(report, join_name(prefix, "noise" + n), h);
    bns_[i].trace(h, report, join_name(prefix, "bn" + n));
    h = Shape{h[0], h[1] / 2, h[2], h[3]};
    trace_elementwise(report, join_name(prefix, "glu" + n), h);
  }
  return h;
}

void UpBlock::collect(const std::string& prefix, ParamStore& store) const {
  for (std::size_t i = 0; i < convs_.size(); ++i) {
    const std::string n = std::to_string(i + 1);
    convs_[i].collect(join_name(prefix, "conv" + n), store);
    bns_[i].collect(join_name(prefix, "bn" + n), store);
  }
}

void UpBlock::set_training(bool training) {
  for (auto& bn : bns_) bn.set_training(training);
}

// ---------------------------------------------------------------- Generator

namespace {

const GeneratorSpec& validated(const GeneratorSpec& s) {
  s.validate();
  return s;
}

ConvTranspose2dSpec init_spec(const GeneratorSpec& s) {
  ConvTranspose2dSpec c;
  c.in_channels = s.latent_dim;
  c.out_channels = 2 * s.stage_widths().front();
  c.kernel = {4, 4};
  return c;
}

Conv2dSpec to_image_spec(const GeneratorSpec& s) {
  Conv2dSpec c = Conv2dSpec::same(s.stage_widths().back(), s.out_channels, 3);
  c.bias = true;
  return c;
}

std::size_t stage_index(std::int64_t resolution) {
  return static_cast<std::size_t>(std::countr_zero(static_cast<std::uint64_t>(resolution)) - 2);
}

std::string skip_name(const std::string& prefix, std::int64_t src, std::int64_t dst) {
  return join_name(prefix, "skip" + std::to_string(src) + "_" + std::to_string(dst));
}

std::string stage_name(const std::string& prefix, std::int64_t res) {
  return join_name(prefix, "stage" + std::to_string(res));
}

}  // namespace

Generator::Generator(const GeneratorSpec& spec, InitRng& rng)
    : spec_(validated(spec)),
      resolutions_(spec.stage_resolutions()),
      widths_(spec.stage_widths()),
      init_(init_spec(spec), rng),
      init_bn_(2 * widths_.front()),
      to_image_(to_image_spec(spec), rng) {
  if (spec_.block_noise_std > 0.0 && !spec_.noise_seed) {
    throw ConfigError("generator: block noise requires a noise seed");
  }
  for (std::size_t i = 1; i < resolutions_.size(); ++i) {
    const bool composite = std::countr_zero(static_cast<std::uint64_t>(resolutions_[i])) % 2 == 1;
    blocks_.emplace_back(widths_[i - 1], widths_[i], composite, spec_.block_noise_std,
                         mix_seed(spec_.noise_seed.value_or(0), 1000 + i), rng);
  }
  const double mask_noise = spec_.mask_noise_std.value_or(sase_noise_for_resolution(spec_.resolution));
  for (auto [src, dst] : spec_.resolved_skip_pairs()) {
    const std::int64_t cx = widths_[stage_index(src)];
    const std::int64_t cy = widths_[stage_index(dst)];
    Skip skip{src, dst, nullptr};
    if (spec_.skip_kind == SkipKind::sle) {
      SLEConfig c;
      c.source_channels = cx;
      c.target_channels = cy;
      skip.module = std::make_unique<SkipLayerExcitation>(c, rng);
    } else {
      SASESynthConfig c;
      c.heads = spec_.sase_heads;
      c.source_channels = cx;
      c.target_channels = cy;
      c.channel_reduction = spec_.sase_channel_reduction;
      c.spatial_reduction = spec_.sase_spatial_reduction;
      c.dilation = sase_dilation_for_source(src);
      c.noise_std = mask_noise;
      if (spec_.noise_seed) c.noise_seed = mix_seed(*spec_.noise_seed, static_cast<std::uint64_t>(dst));
      skip.module = std::make_unique<SASESynth>(c, rng);
    }
    skips_.push_back(std::move(skip));
  }
}

GeneratorResult Generator::forward_full(const Tensor& z) {
  Tensor code = z;
  if (code.rank() == 1) code = unsqueeze(code, 0);
  if (code.rank() != 2 || code.dim(1) != spec_.latent_dim) {
    throw ShapeError("generator: latent must be [" + std::to_string(spec_.latent_dim) +
                     "] or [B," + std::to_string(spec_.latent_dim) + "], got " +
                     z.shape().to_string());
  }
  const std::int64_t b = code.dim(0);
  std::vector<Tensor> feats;
  feats.push_back(glu(init_bn_.forward(init_.forward(reshape(code, Shape{b, spec_.latent_dim, 1, 1})))));
  GeneratorResult result;
  for (std::size_t i = 1; i < resolutions_.size(); ++i) {
    Tensor h = blocks_[i - 1].forward(feats.back());
    for (auto& skip : skips_) {
      if (skip.target != resolutions_[i]) continue;
      const Tensor& source = feats[stage_index(skip.source)];
      if (auto* sase = dynamic_cast<SASESynth*>(skip.module.get())) {
        auto r = sase->forward_full(source, h);
        result.masks.push_back({skip.source, skip.target, std::move(r.keys)});
        h = r.output;
      } else {
        h = skip.module->forward(source, h);
      }
    }
    feats.push_back(h);
  }
  result.image = tanh(to_image_.forward(feats.back()));
  return result;
}

Tensor Generator::forward(const Tensor& z) { return forward_full(z).image; }

void Generator::trace(std::int64_t batch, CostReport& report, const std::string& prefix) const {
  std::vector<Shape> feats;
  Shape h = init_.trace(Shape{batch, spec_.latent_dim, 1, 1}, report, join_name(prefix, "init.convt"));
  init_bn_.trace(h, report, join_name(prefix, "init.bn"));
  h = Shape{h[0], h[1] / 2, h[2], h[3]};
  trace_elementwise(report, join_name(prefix, "init.glu"), h);
  feats.push_back(h);
  for (std::size_t i = 1; i < resolutions_.size(); ++i) {
    h = blocks_[i - 1].trace(feats.back(), report, stage_name(prefix, resolutions_[i]));
    for (const auto& skip : skips_) {
      if (skip.target != resolutions_[i]) continue;
      skip.module->trace(feats[stage_index(skip.source)], h, report,
                         skip_name(prefix, skip.source, skip.target));
    }
    feats.push_back(h);
  }
  h = to_image_.trace(h, report, join_name(prefix, "to_image.conv"));
  trace_elementwise(report, join_name(prefix, "to_image.tanh"), h);
}

void Generator::collect(const std::string& prefix, ParamStore& store) const {
  init_.collect(join_name(prefix, "init.convt"), store);
  init_bn_.collect(join_name(prefix, "init.bn"), store);
  for (std::size_t i = 1; i < resolutions_.size(); ++i) {
    blocks_[i - 1].collect(stage_name(prefix, resolutions_[i]), store);
  }
  for (const auto& skip : skips_) {
    skip.module->collect(skip_name(prefix, skip.source, skip.target), store);
  }
  to_image_.collect(join_name(prefix, "to_image.conv"), store);
}

void Generator::set_training(bool training) {
  init_bn_.set_training(training);
  for (auto& b : blocks_) b.set_training(training);
  for (auto& s : skips_) s.module->set_training(training);
}

}  // namespace sase
