#include "sase/attention.hpp"
#include "sase/error.hpp"
#include "sase/ops.hpp"

namespace sase {

std::int64_t SASESynthConfig::query_hidden() const {
  return std::max<std::int64_t>(1, target_channels / channel_reduction);
}

std::int64_t SASESynthConfig::key_hidden() const {
  return std::max<std::int64_t>(1, head_channels() / spatial_reduction);
}

void SASESynthConfig::validate() const {
  if (heads < 1 || source_channels < 1 || target_channels < 1) {
    throw ConfigError("sase_synth: heads and channel counts must be positive");
  }
  if (source_channels % heads != 0) {
    throw ConfigError("sase_synth: source channels " + std::to_string(source_channels) +
                      " not divisible by " + std::to_string(heads) + " heads");
  }
  if (channel_reduction < 1 || spatial_reduction < 1 || pool_size < 1 || dilation < 1) {
    throw ConfigError("sase_synth: reductions, pool size and dilation must be >= 1");
  }
  if (epsilon < 0.0 || noise_std < 0.0) {
    throw ConfigError("sase_synth: epsilon and noise_std must be >= 0");
  }
}

std::int64_t sase_dilation_for_source(std::int64_t source_resolution) {
  switch (source_resolution) {
    case 8:
    case 16:
      return 2;
    case 32:
      return 4;
    default:
      return 1;
  }
}

double sase_noise_for_resolution(std::int64_t image_resolution) {
  return image_resolution >= 1024 ? 1.0 : 0.0;
}

Tensor combine_heads(const std::vector<Tensor>& queries, const std::vector<Tensor>& keys,
                     double eps) {
  if (queries.empty() || queries.size() != keys.size()) {
    throw ShapeError("combine_heads: need one key per query and at least one head");
  }
  Tensor numerator = mul(queries[0], keys[0]);
  Tensor denominator = keys[0];
  for (std::size_t i = 1; i < queries.size(); ++i) {
    numerator = add(numerator, mul(queries[i], keys[i]));
    denominator = add(denominator, keys[i]);
  }
  return div(numerator, denominator, eps);
}

namespace {

std::uint64_t head_seed(std::uint64_t seed, std::size_t head) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ull * (head + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

SASESynth::Head make_head(const SASESynthConfig& c, InitRng& rng) {
  Conv2dSpec qr;
  qr.in_channels = c.head_channels();
  qr.out_channels = c.query_hidden();
  qr.kernel = {c.pool_size, c.pool_size};
  Conv2dSpec qe;
  qe.in_channels = c.query_hidden();
  qe.out_channels = c.target_channels;
  qe.kernel = {1, 1};
  const Conv2dSpec kr = Conv2dSpec::same(c.head_channels(), c.key_hidden(), 3, c.dilation);
  const Conv2dSpec ko = Conv2dSpec::same(c.key_hidden(), 1, 3, c.dilation);
  return SASESynth::Head{Conv2d(qr, rng), Conv2d(qe, rng), Conv2d(kr, rng), Conv2d(ko, rng)};
}

std::string head_name(const std::string& prefix, std::size_t i) {
  return join_name(prefix, "head" + std::to_string(i));
}

}  // namespace

SASESynth::SASESynth(const SASESynthConfig& config, InitRng& rng) : config_(config) {
  config_.validate();
  for (std::int64_t i = 0; i < config_.heads; ++i) heads_.push_back(make_head(config_, rng));
}

SASESynthResult SASESynth::forward_full(const Tensor& source, const Tensor& target) {
  config_.validate();
  if (source.rank() != 4 || source.dim(1) != config_.source_channels) {
    throw ShapeError("sase_synth: source " + source.shape().to_string() + " channel mismatch");
  }
  if (target.rank() != 4 || target.dim(1) != config_.target_channels ||
      target.dim(0) != source.dim(0)) {
    throw ShapeError("sase_synth: target " + target.shape().to_string() + " mismatch");
  }
  if (source.dim(2) < config_.pool_size || source.dim(3) < config_.pool_size) {
    throw ShapeError("sase_synth: source extent smaller than the pool size");
  }
  if (config_.noise_std > 0.0 && !config_.noise_seed) {
    throw ConfigError("sase_synth: noise_std > 0 requires a noise seed");
  }
  const std::int64_t th = target.dim(2), tw = target.dim(3);
  const std::int64_t hc = config_.head_channels();

  SASESynthResult result;
  for (std::size_t i = 0; i < heads_.size(); ++i) {
    Head& h = heads_[i];
    const Tensor xi =
        heads_.size() == 1 ? source : narrow(source, 1, static_cast<std::int64_t>(i) * hc, hc);
    const Tensor pooled = adaptive_avg_pool(xi, config_.pool_size, config_.pool_size);
    result.queries.push_back(sigmoid(h.query_expand.forward(
        leaky_relu(h.query_reduce.forward(pooled), config_.leaky_slope))));

    Tensor logits = h.key_out.forward(leaky_relu(h.key_reduce.forward(xi), config_.leaky_slope));
    if (config_.noise_std > 0.0) {
      logits = inject_noise(logits, head_seed(*config_.noise_seed, i), config_.noise_std);
    }
    Tensor key = sigmoid(logits);
    if (key.dim(2) != th || key.dim(3) != tw) key = resize_bilinear(key, th, tw);
    result.keys.push_back(key);
  }
  result.weight = combine_heads(result.queries, result.keys, config_.epsilon);
  result.output = mul(result.weight, target);
  return result;
}

Tensor SASESynth::forward(const Tensor& source, const Tensor& target) {
  return forward_full(source, target).output;
}

void SASESynth::trace(const Shape& source, const Shape& target, CostReport& report,
                      const std::string& prefix) const {
  config_.validate();
  if (source.rank() != 4 || source[1] != config_.source_channels || target.rank() != 4 ||
      target[1] != config_.target_channels) {
    throw ShapeError("sase_synth: shapes " + source.to_string() + " / " + target.to_string() +
                     " do not match config");
  }
  const std::int64_t b = source[0];
  const Shape xi{b, config_.head_channels(), source[2], source[3]};
  const Shape key_shape{b, 1, target[2], target[3]};
  for (std::size_t i = 0; i < heads_.size(); ++i) {
    const Head& h = heads_[i];
    const std::string name = head_name(prefix, i);
    const Shape pooled{b, xi[1], config_.pool_size, config_.pool_size};
    trace_elementwise(report, join_name(name, "query.pool"), pooled);
    const Shape q1 = h.query_reduce.trace(pooled, report, join_name(name, "query.conv_reduce"));
    trace_elementwise(report, join_name(name, "query.lrelu"), q1);
    const Shape q2 = h.query_expand.trace(q1, report, join_name(name, "query.conv_expand"));
    trace_elementwise(report, join_name(name, "query.sigmoid"), q2);

    const Shape k1 = h.key_reduce.trace(xi, report, join_name(name, "key.conv_reduce"));
    trace_elementwise(report, join_name(name, "key.lrelu"), k1);
    const Shape k2 = h.key_out.trace(k1, report, join_name(name, "key.conv_out"));
    if (config_.noise_std > 0.0) trace_elementwise(report, join_name(name, "key.noise"), k2);
    trace_elementwise(report, join_name(name, "key.sigmoid"), k2);
    if (k2[2] != target[2] || k2[3] != target[3]) {
      trace_elementwise(report, join_name(name, "key.resize"), key_shape);
    }
  }
  const Shape full{b, config_.target_channels, target[2], target[3]};
  const auto g = static_cast<std::uint64_t>(heads_.size());
  report.add(join_name(prefix, "combine.numerator"), 0,
             (2 * g - 1) * static_cast<std::uint64_t>(full.numel()), full);
  report.add(join_name(prefix, "combine.denominator"), 0,
             (g - 1) * static_cast<std::uint64_t>(key_shape.numel()), key_shape);
  trace_elementwise(report, join_name(prefix, "combine.divide"), full);
  trace_elementwise(report, join_name(prefix, "modulate"), full);
}

void SASESynth::collect(const std::string& prefix, ParamStore& store) const {
  for (std::size_t i = 0; i < heads_.size(); ++i) {
    const std::string name = head_name(prefix, i);
    heads_[i].query_reduce.collect(join_name(name, "query.conv_reduce"), store);
    heads_[i].query_expand.collect(join_name(name, "query.conv_expand"), store);
    heads_[i].key_reduce.collect(join_name(name, "key.conv_reduce"), store);
    heads_[i].key_out.collect(join_name(name, "key.conv_out"), store);
  }
}

}  // namespace sase
