#include "sase/train.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <memory>
#include <numeric>
#include <random>
#include <sstream>

#include <json.hpp>

#include "sase/ops.hpp"

namespace sase {

BlobDataset make_blob_dataset(std::uint64_t seed, std::int64_t n, const BlobOptions& options) {
  const std::int64_t s = options.size;
  if (n < 1) throw ConfigError("blob dataset needs n >= 1");
  if (s < 4 || s % 2 != 0) throw ConfigError("blob size must be even and >= 4");
  if (options.sigma <= 0.0 || options.noise_std < 0.0) {
    throw ConfigError("blob sigma must be > 0 and noise std >= 0");
  }
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> noise(0.0, 1.0);
  const std::int64_t half = s / 2;
  // Centres stay one pixel away from the quadrant border.
  std::uniform_int_distribution<std::int64_t> offset(1, half - 2 > 1 ? half - 2 : 1);
  BlobDataset ds;
  std::vector<double> pixels(static_cast<std::size_t>(n * s * s));
  const double inv = 1.0 / (2.0 * options.sigma * options.sigma);
  for (std::int64_t i = 0; i < n; ++i) {
    const std::int64_t label = i % 4;
    const std::int64_t cy = (label / 2) * half + offset(gen);
    const std::int64_t cx = (label % 2) * half + offset(gen);
    double* img = pixels.data() + i * s * s;
    for (std::int64_t y = 0; y < s; ++y) {
      for (std::int64_t x = 0; x < s; ++x) {
        const double d2 = static_cast<double>((y - cy) * (y - cy) + (x - cx) * (x - cx));
        img[y * s + x] = options.amplitude * std::exp(-d2 * inv);
      }
    }
    if (options.noise_std > 0.0) {
      for (std::int64_t p = 0; p < s * s; ++p) img[p] += options.noise_std * noise(gen);
    }
    ds.labels.push_back(label);
    ds.centers.emplace_back(cy, cx);
  }
  ds.images = Tensor::from_values(Shape{n, 1, s, s}, std::move(pixels));
  return ds;
}

ResNetSpec tiny_classifier_spec(BlockVariant variant) {
  ResNetSpec s;
  s.variant = variant;
  s.depths = {1, 1};
  s.widths = {16, 32};
  s.strides = {1, 2};
  s.bottleneck_ratio = 2;
  s.in_channels = 1;
  s.stem_channels = 8;
  s.stem_kernel = 3;
  s.stem_stride = 1;
  s.stem_pool = false;
  s.head_pool = 2;
  s.num_classes = 4;
  s.se_reduction = 4;
  s.heads = 2;
  s.query_reduction = 2;
  s.key_reduction = 2;
  s.mhsa_stages = {1};
  return s;
}

void TrainOptions::validate() const {
  if (steps < 1) throw ConfigError("train: steps must be >= 1");
  if (samples < 1) throw ConfigError("train: samples must be >= 1");
  if (batch_size < 0 || batch_size > samples) {
    throw ConfigError("train: batch size must be in [0, samples]");
  }
  if (batch_size == 1) throw ConfigError("train: batch norm needs a batch of at least 2");
  if (optimizer != "adam" && optimizer != "sgd") {
    throw ConfigError("train: optimizer must be adam or sgd, got '" + optimizer + "'");
  }
}

namespace {

double accuracy(const Tensor& logits, const std::vector<std::int64_t>& labels) {
  const std::int64_t k = logits.dim(1);
  auto v = logits.data();
  std::int64_t hits = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const double* row = v.data() + static_cast<std::int64_t>(i) * k;
    const std::int64_t best = std::max_element(row, row + k) - row;
    hits += best == labels[i];
  }
  return static_cast<double>(hits) / static_cast<double>(labels.size());
}

std::string fmt9(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

}  // namespace

TrainResult train_classifier(const TrainOptions& options, ResNet& model) {
  options.validate();
  const BlobDataset data = make_blob_dataset(options.seed, options.samples, options.data);
  const ParamStore store = model.parameters();
  std::unique_ptr<Optimizer> opt;
  if (options.optimizer == "adam") {
    opt = std::make_unique<Adam>(store.trainable(), options.adam);
  } else {
    opt = std::make_unique<SGD>(store.trainable(), options.sgd);
  }

  const std::int64_t n = options.samples;
  const std::int64_t batch = options.batch_size == 0 ? n : options.batch_size;
  std::vector<std::int64_t> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 shuffle_gen(options.seed ^ 0x5eedULL);
  std::int64_t cursor = n;

  const std::int64_t pixels = data.images.numel() / n;
  auto gather = [&](std::int64_t count) {
    if (batch == n) return std::pair{data.images, data.labels};
    std::vector<double> x;
    std::vector<std::int64_t> y;
    for (std::int64_t j = 0; j < count; ++j) {
      if (cursor == n) {
        std::shuffle(order.begin(), order.end(), shuffle_gen);
        cursor = 0;
      }
      const std::int64_t idx = order[static_cast<std::size_t>(cursor++)];
      auto src = data.images.data().subspan(static_cast<std::size_t>(idx * pixels),
                                            static_cast<std::size_t>(pixels));
      x.insert(x.end(), src.begin(), src.end());
      y.push_back(data.labels[static_cast<std::size_t>(idx)]);
    }
    auto dims = data.images.shape().dims();
    dims[0] = count;
    return std::pair{Tensor::from_values(Shape(dims), std::move(x)), std::move(y)};
  };

  TrainResult result;
  model.set_training(true);
  std::int64_t step = 0;
  try {
    for (; step < options.steps; ++step) {
      const auto t0 = std::chrono::steady_clock::now();
      auto [x, y] = gather(batch);
      opt->zero_grad();
      const Tensor logits = model.forward(x);
      const Tensor loss = cross_entropy(logits, y);
      TrainRecord rec;
      rec.step = step;
      rec.loss = loss.item();
      if (!std::isfinite(rec.loss)) {
        throw DivergenceError("train: non-finite loss at step " + std::to_string(step), step - 1);
      }
      rec.acc = accuracy(logits, y);
      loss.backward();
      rec.grad_norm = opt->grad_norm();
      if (!std::isfinite(rec.grad_norm)) {
        throw DivergenceError("train: non-finite gradient at step " + std::to_string(step),
                              step - 1);
      }
      opt->step();
      if (options.timing) {
        const auto elapsed = std::chrono::steady_clock::now() - t0;
        rec.wall_ms = std::chrono::duration<double, std::milli>(elapsed).count();
      }
      if (step == 0) result.initial_loss = rec.loss;
      result.records.push_back(rec);
    }
  } catch (const DivergenceError&) {
    throw;
  } catch (const NumericError& e) {
    throw DivergenceError(std::string("train: step ") + std::to_string(step) + ": " + e.what(),
                          step - 1);
  }

  model.set_training(false);
  {
    NoGradGuard guard;
    const Tensor logits = model.forward(data.images);
    result.final_loss = cross_entropy(logits, data.labels).item();
    result.final_acc = accuracy(logits, data.labels);
  }
  if (!std::isfinite(result.final_loss)) {
    throw DivergenceError("train: non-finite final loss", options.steps - 1);
  }
  return result;
}

std::string TrainResult::metrics_csv() const {
  std::ostringstream os;
  os << "step,loss,acc,grad_norm,wall_ms\n";
  for (const auto& r : records) {
    os << r.step << ',' << fmt9(r.loss) << ',' << fmt9(r.acc) << ',' << fmt9(r.grad_norm) << ','
       << fmt9(r.wall_ms) << '\n';
  }
  return os.str();
}

std::string TrainResult::summary_json(int indent) const {
  nlohmann::ordered_json j;
  j["steps"] = records.size();
  j["initial_loss"] = initial_loss;
  j["final_loss"] = final_loss;
  j["final_acc"] = final_acc;
  j["loss_ratio"] = initial_loss > 0.0 ? final_loss / initial_loss : 0.0;
  if (!records.empty()) {
    j["last_step_loss"] = records.back().loss;
    j["last_step_acc"] = records.back().acc;
  }
  return j.dump(indent);
}

}  // namespace sase
